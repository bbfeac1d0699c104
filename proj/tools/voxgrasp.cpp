// voxgrasp: volumetric grasp detection pipeline driver.
// Subcommands: datagen, train, predict, eval, bench.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "voxgrasp/runconfig.hpp"
#include "voxgrasp/voxgrasp.hpp"

namespace fs = std::filesystem;
using Real = double;

namespace {

std::uint64_t scene_stream(std::uint64_t seed, std::uint64_t index, std::uint64_t salt) {
  return vg::splitmix64(seed ^ vg::splitmix64(index * 2654435761u + salt));
}

void echo_config(const CLI::App& app, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir + "/effective_config.ini");
  f << app.config_to_str(true, true);
}

vg::SceneRecord build_scene_record(const vg::RunConfig& rc, vg::SceneKind kind, int objects,
                                   std::uint32_t index, std::uint64_t seed,
                                   const std::vector<vg::Camera>& cameras, vg::LabelStats* stats,
                                   vg::SdfScene* scene_out = nullptr) {
  std::uint64_t scene_seed = scene_stream(seed, index, 0xA11CE);
  vg::SdfScene scene =
      vg::make_scene(kind, objects, rc.scale_lo, rc.scale_hi, scene_seed, rc.scene_config());
  std::vector<vg::DepthImage> views;
  views.reserve(cameras.size());
  for (const auto& cam : cameras) views.push_back(vg::render_depth(scene, cam));
  vg::TsdfGrid grid = vg::tsdf_fuse(views, rc.fuse_config());
  vg::Rng label_rng(seed, scene_stream(seed, index, 0x1ABE1));
  vg::SceneRecord rec = vg::label_scene(scene, std::move(grid), rc.label_config(),
                                        rc.oracle_config(), label_rng, rc.gripper(), stats);
  rec.scene_index = index;
  rec.seed = scene_seed;
  if (scene_out) *scene_out = std::move(scene);
  return rec;
}

int cmd_datagen(const CLI::App& app, const vg::RunConfig& rc, int scenes, const std::string& kind,
                const std::string& out) {
  vg::SceneKind sk = vg::scene_kind_from_name(kind);
  int objects = sk == vg::SceneKind::single ? 1 : rc.objects_per_scene;
  auto cameras = rc.camera_ring();

  std::vector<vg::SceneRecord> records(std::size_t(scenes));
  std::vector<vg::SdfScene> scene_objs(std::size_t(scenes));
  std::vector<vg::LabelStats> stats(std::size_t(scenes));
  vg::parallel_for(std::size_t(scenes), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      records[i] = build_scene_record(rc, sk, objects, std::uint32_t(i), rc.seed, cameras,
                                      &stats[i], &scene_objs[i]);
  });

  fs::create_directories(out);
  vg::write_dataset(records, out);
  for (std::size_t i = 0; i < records.size(); ++i)
    vg::write_scene(scene_objs[i], out + "/" + vg::scene_basename(std::uint32_t(i)) + ".scene");
  echo_config(app, out);

  vg::LabelStats total;
  std::int64_t positives = 0, negatives = 0, incomplete = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    total.candidates += stats[i].candidates;
    total.pruned += stats[i].pruned;
    total.oracle_calls += stats[i].oracle_calls;
    positives += records[i].positive_count();
    negatives += records[i].negative_count();
    incomplete += records[i].quota_incomplete;
  }
  if (incomplete == std::int64_t(records.size()))
    throw std::runtime_error("label budget exhausted on every scene; nothing usable generated");
  double pruned_frac = total.candidates ? double(total.pruned) / double(total.candidates) : 0.0;
  std::printf("scenes: %d (%s), labels: %lld positive / %lld negative, incomplete quotas: %lld\n",
              scenes, kind.c_str(), (long long)positives, (long long)negatives,
              (long long)incomplete);
  std::printf("candidates: %lld, pruned by keypoint check: %lld (%.1f%%), oracle calls: %lld\n",
              (long long)total.candidates, (long long)total.pruned, 100.0 * pruned_frac,
              (long long)total.oracle_calls);
  std::printf("oracle invocations avoided by pre-pruning: %lld (%.1f%% of candidates)\n",
              (long long)total.pruned, 100.0 * pruned_frac);
  return 0;
}

int cmd_train(const CLI::App& app, const vg::RunConfig& rc, const std::string& data,
              const std::string& out, const std::string& resume) {
  auto records = vg::read_dataset(data);
  if (records.empty()) throw std::runtime_error("dataset is empty: " + data);
  vg::ModelConfig mc = rc.model_config(records[0].tsdf.resolution);
  vg::GraspNet<Real> model(mc);
  vg::TrainConfig tc = rc.train_config();
  tc.validate();
  vg::Rng proj_rng(rc.seed, 0x9907);
  vg::add_projection_head(model.params, mc.c1 + mc.c2 + mc.c3,
                          vg::ProjectionConfig{tc.proj_hidden, tc.embed_dim}, proj_rng);

  int resume_epoch = 0;
  if (!resume.empty()) {
    auto extra = vg::load_checkpoint(model.params, resume);
    if (extra.count("meta.epoch")) resume_epoch = int(extra["meta.epoch"][0]);
    std::printf("resumed from %s at epoch %d\n", resume.c_str(), resume_epoch);
  }

  fs::create_directories(out);
  echo_config(app, out);
  vg::write_model_config(mc, out + "/model_config.txt");
  auto result = vg::train(model, records, tc, out,
                          [](const std::string& line) { std::printf("%s\n", line.c_str()); },
                          resume_epoch);
  std::printf("training done: %lld steps, best epoch %d (val_bce %.4f)\n",
              (long long)result.steps_run, result.best_epoch, result.best_val_bce);
  std::printf("checkpoints: %s , %s\n", result.last_checkpoint.c_str(),
              result.best_checkpoint.c_str());
  return 0;
}

vg::ModelConfig model_config_for_checkpoint(const vg::RunConfig& rc, const std::string& checkpoint,
                                            int resolution) {
  fs::path sibling = fs::path(checkpoint).parent_path() / "model_config.txt";
  if (fs::exists(sibling)) {
    vg::ModelConfig mc = vg::read_model_config(sibling.string());
    if (resolution > 0 && mc.grid_resolution != resolution)
      throw std::runtime_error("checkpoint model resolution " +
                               std::to_string(mc.grid_resolution) +
                               " does not match input grid " + std::to_string(resolution));
    return mc;
  }
  return rc.model_config(resolution);
}

int cmd_predict(const vg::RunConfig& rc, const std::string& checkpoint, const std::string& tsdf,
                const std::string& out) {
  vg::TsdfGrid grid = vg::read_tsdf(tsdf);
  vg::ModelConfig mc = model_config_for_checkpoint(rc, checkpoint, grid.resolution);
  vg::GraspNet<Real> model(mc);
  vg::load_checkpoint(model.params, checkpoint);
  vg::GraspPrediction pred = model.predict(grid);
  vg::write_prediction(pred, out);
  auto sel = vg::select_grasp(pred, {}, rc.quality_threshold);
  if (sel)
    std::printf("prediction written to %s; best voxel %zu quality %.3f width %.4f\n", out.c_str(),
                sel->voxel, sel->quality, sel->width);
  else
    std::printf("prediction written to %s; no voxel above quality %.2f\n", out.c_str(),
                rc.quality_threshold);
  return 0;
}

int cmd_eval(const CLI::App& app, const vg::RunConfig& rc, const std::string& checkpoint,
             int episodes, const std::string& mode, const std::string& planner_kind,
             const std::string& out, bool export_grasps) {
  bool single = mode == "single";
  if (!single && mode != "multi") throw CLI::ValidationError("--mode must be single or multi");

  vg::EpisodeConfig ec;
  ec.fuse = rc.fuse_config();
  ec.cameras = rc.camera_ring();
  ec.gripper = rc.gripper();
  ec.oracle = rc.oracle_config();
  ec.consecutive_failure_limit = single ? rc.failure_limit_single : rc.failure_limit_multi;

  std::unique_ptr<vg::GraspNet<Real>> model;
  vg::Planner planner;
  if (planner_kind == "oracle") {
    planner = vg::oracle_planner(ec.gripper, ec.oracle, rc.seed);
  } else if (planner_kind == "network") {
    if (checkpoint.empty()) throw CLI::ValidationError("--checkpoint required for network planner");
    vg::ModelConfig mc = model_config_for_checkpoint(rc, checkpoint, rc.grid_resolution);
    if (mc.grid_resolution != rc.grid_resolution)
      ec.fuse.resolution = mc.grid_resolution;
    model = std::make_unique<vg::GraspNet<Real>>(mc);
    vg::load_checkpoint(model->params, checkpoint);
    planner = vg::network_planner(*model, rc.quality_threshold);
  } else {
    throw CLI::ValidationError("--planner must be network or oracle");
  }

  std::vector<vg::EpisodeResult> results;
  fs::create_directories(out);
  for (int e = 0; e < episodes; ++e) {
    vg::SdfScene scene = vg::make_scene(single ? vg::SceneKind::single : vg::SceneKind::pile,
                                        single ? 1 : rc.objects_per_scene, rc.scale_lo,
                                        rc.scale_hi, scene_stream(rc.seed, std::uint64_t(e), 0xE7A1),
                                        rc.scene_config());
    vg::EpisodeResult res = vg::run_episode(scene, planner, ec);
    if (export_grasps) {
      for (const auto& a : res.log) {
        char name[64];
        std::snprintf(name, sizeof name, "/grasp_e%03d_a%02d.off", e, a.attempt);
        vg::Pose pose;
        pose.rotation = a.rotation;
        std::size_t v = a.voxel;
        int n = ec.fuse.resolution;
        double vs = ec.fuse.voxel_size();
        pose.translation = {(double(v % std::size_t(n)) + 0.5) * vs,
                            (double((v / std::size_t(n)) % std::size_t(n)) + 0.5) * vs,
                            (double(v / (std::size_t(n) * n)) + 0.5) * vs};
        vg::write_gripper_off(pose, a.width, ec.gripper, out + name);
      }
    }
    results.push_back(std::move(res));
  }
  vg::write_episode_csv(results, out + "/episodes.csv");
  echo_config(app, out);

  vg::EvalMetrics m = vg::eval_metrics(results);
  std::printf("episodes: %d (%s, %s planner, failure limit %d)\n", episodes, mode.c_str(),
              planner_kind.c_str(), ec.consecutive_failure_limit);
  if (m.success_rate)
    std::printf("SR: %.1f%% (%lld/%lld)\n", 100.0 * *m.success_rate, (long long)m.successes,
                (long long)m.attempts);
  else
    std::printf("SR: N/A (0 attempts)\n");
  std::printf("DR: %.1f%% (%lld/%lld)\n", 100.0 * m.declutter_rate, (long long)m.removed,
              (long long)m.initial);
  return 0;
}

int cmd_bench(const vg::RunConfig& rc, const std::string& op, int size) {
  using clk = std::chrono::steady_clock;
  auto run = [&](auto&& fn, std::int64_t voxels) {
    fn();  // warm up
    auto t0 = clk::now();
    int reps = 3;
    for (int r = 0; r < reps; ++r) fn();
    double ms = std::chrono::duration<double, std::milli>(clk::now() - t0).count() / reps;
    std::printf("bench %s size=%d time_ms=%.2f voxels_per_s=%.3g\n", op.c_str(), size, ms,
                double(voxels) / (ms / 1000.0));
  };

  vg::Rng rng(7);
  if (op == "conv3") {
    vg::Tensor<Real> in({8, size, size, size});
    for (auto& v : in.data) v = rng.uniform(-1, 1);
    vg::Tensor<Real> w({16, 8, 3, 3, 3}), b({16});
    vg::he_uniform_fill(w, 8 * 27, rng);
    run([&] { vg::conv3_forward(in, w, b, 1); }, std::int64_t(size) * size * size);
  } else if (op == "attention") {
    if (size % 4) throw CLI::ValidationError("--size must be divisible by 4 for attention");
    vg::ModelConfig mc = vg::ModelConfig::toy(size);
    vg::GraspNet<Real> net(mc);
    vg::Tensor<Real> x3({mc.c3, size / 4, size / 4, size / 4});
    for (auto& v : x3.data) v = rng.uniform(-1, 1);
    run([&] { net.empower_eager(x3); }, std::int64_t(size / 4) * (size / 4) * (size / 4));
  } else if (op == "fuse") {
    vg::RunConfig brc = rc;
    brc.grid_resolution = size;
    vg::SdfScene scene = vg::make_scene(vg::SceneKind::single, 1, 0.8, 1.0, 7, brc.scene_config());
    std::vector<vg::DepthImage> views;
    for (const auto& cam : brc.camera_ring()) views.push_back(vg::render_depth(scene, cam));
    run([&] { vg::tsdf_fuse(views, brc.fuse_config()); }, std::int64_t(size) * size * size);
  } else {
    throw CLI::ValidationError("--op must be conv3, attention, or fuse");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxgrasp: volumetric 6-DoF grasp detection pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "configuration file (INI; flat keys mirror these options)");
  app.allow_config_extras(false);

  vg::RunConfig rc;
  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0 = all cores)")
      ->envname("VOXGRASP_THREADS");
  app.add_option("--seed", rc.seed, "global RNG seed")->capture_default_str();
  app.add_option("--grid", rc.grid_resolution, "TSDF grid resolution")->capture_default_str();
  app.add_option("--workspace", rc.workspace_size, "workspace cube edge, meters")
      ->capture_default_str();
  app.add_option("--truncation", rc.truncation, "TSDF truncation, meters (0 = 4 voxels)")
      ->capture_default_str();
  app.add_option("--max-width", rc.gripper_max_width, "gripper opening, meters")
      ->capture_default_str();
  app.add_option("--finger-depth", rc.gripper_finger_depth, "finger depth, meters")
      ->capture_default_str();
  app.add_option("--table-height", rc.table_height, "table height, meters")->capture_default_str();
  app.add_option("--objects", rc.objects_per_scene, "objects per multi-object scene")
      ->capture_default_str();
  app.add_option("--friction", rc.friction, "oracle friction coefficient")->capture_default_str();
  app.add_option("--clearance", rc.keypoint_clearance, "oracle keypoint clearance, meters")
      ->capture_default_str();
  app.add_option("--cameras", rc.camera_count, "fusion viewpoint count")->capture_default_str();
  app.add_option("--c1", rc.c1, "pyramid level-1 channels")->capture_default_str();
  app.add_option("--c2", rc.c2, "pyramid level-2 channels")->capture_default_str();
  app.add_option("--c3", rc.c3, "pyramid level-3 channels")->capture_default_str();
  app.add_option("--mos-parts", rc.mos_parts, "softmax mixture parts")->capture_default_str();
  app.add_option("--bank-capacity", rc.bank_capacity, "memory bank capacity")
      ->capture_default_str();
  app.add_option("--embed-dim", rc.embed_dim, "contrastive embedding dim")->capture_default_str();
  app.add_option("--proj-hidden", rc.proj_hidden, "projection head hidden dim")
      ->capture_default_str();
  app.add_option("--q-min", rc.quality_threshold, "grasp execution quality threshold")
      ->capture_default_str();

  // datagen
  auto* dg = app.add_subcommand("datagen", "generate labeled scenes");
  int dg_scenes = 100;
  std::string dg_kind = "pile", dg_out;
  dg->add_option("--scenes", dg_scenes, "scene count")->capture_default_str();
  dg->add_option("--kind", dg_kind, "scene kind: single | pile | packed")->capture_default_str();
  dg->add_option("--out", dg_out, "output dataset directory")->required();
  dg->add_option("--scale-lo", rc.scale_lo, "object scale lower bound")->capture_default_str();
  dg->add_option("--scale-hi", rc.scale_hi, "object scale upper bound")->capture_default_str();
  dg->add_option("--positives", rc.label_positives, "positive labels per scene")
      ->capture_default_str();
  dg->add_option("--negatives", rc.label_negatives, "negative labels per scene")
      ->capture_default_str();
  dg->add_option("--budget", rc.label_budget, "candidate budget per scene")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "train the grasp network");
  std::string tr_data, tr_out, tr_resume;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");
  tr->add_option("--epochs", rc.epochs, "training epochs")->capture_default_str();
  tr->add_option("--contrast-weight", rc.contrast_weight, "contrastive loss weight (0 disables)")
      ->capture_default_str();
  tr->add_option("--lr-init", rc.lr_init, "initial learning rate")->capture_default_str();
  tr->add_option("--lr-max", rc.lr_max, "peak learning rate")->capture_default_str();

  // predict
  auto* pr = app.add_subcommand("predict", "run inference on a TSDF file");
  std::string pr_ckpt, pr_tsdf, pr_out;
  pr->add_option("--checkpoint", pr_ckpt, "checkpoint file")->required();
  pr->add_option("--tsdf", pr_tsdf, "input TSDF file")->required();
  pr->add_option("--out", pr_out, "output prediction file")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "closed-loop declutter evaluation");
  std::string ev_ckpt, ev_mode = "single", ev_planner = "network", ev_out = "eval_out";
  int ev_scenes = 20;
  bool ev_export = false;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file (network planner)");
  ev->add_option("--scenes", ev_scenes, "episode count")->capture_default_str();
  ev->add_option("--mode", ev_mode, "single | multi (failure limits 1 | 2)")
      ->capture_default_str();
  ev->add_option("--planner", ev_planner, "network | oracle (harness self-test)")
      ->capture_default_str();
  ev->add_option("--out", ev_out, "output directory")->capture_default_str();
  ev->add_option("--scale-lo", rc.scale_lo, "object scale lower bound")->capture_default_str();
  ev->add_option("--scale-hi", rc.scale_hi, "object scale upper bound")->capture_default_str();
  ev->add_flag("--export-grasps", ev_export, "write an OFF skeleton per attempt");

  // bench
  auto* bn = app.add_subcommand("bench", "micro-benchmarks");
  std::string bn_op = "conv3";
  int bn_size = 32;
  bn->add_option("--op", bn_op, "conv3 | attention | fuse")->capture_default_str();
  bn->add_option("--size", bn_size, "cube edge length")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  vg::set_max_threads(threads);
  try {
    if (*dg) return cmd_datagen(app, rc, dg_scenes, dg_kind, dg_out);
    if (*tr) return cmd_train(app, rc, tr_data, tr_out, tr_resume);
    if (*pr) return cmd_predict(rc, pr_ckpt, pr_tsdf, pr_out);
    if (*ev) return cmd_eval(app, rc, ev_ckpt, ev_scenes, ev_mode, ev_planner, ev_out, ev_export);
    if (*bn) return cmd_bench(rc, bn_op, bn_size);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const vg::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
