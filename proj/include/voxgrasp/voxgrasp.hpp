#pragma once

#include "voxgrasp/common.hpp"
#include "voxgrasp/contrastive.hpp"
#include "voxgrasp/datagen.hpp"
#include "voxgrasp/evalsim.hpp"
#include "voxgrasp/geometry.hpp"
#include "voxgrasp/graph.hpp"
#include "voxgrasp/network.hpp"
#include "voxgrasp/scene.hpp"
#include "voxgrasp/tensor.hpp"
#include "voxgrasp/training.hpp"
#include "voxgrasp/volume.hpp"
