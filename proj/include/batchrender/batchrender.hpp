#pragma once

#include "batchrender/batch_state.hpp"
#include "batchrender/bench.hpp"
#include "batchrender/env.hpp"
#include "batchrender/error.hpp"
#include "batchrender/gpu/device.hpp"
#include "batchrender/gpu/dlpack.hpp"
#include "batchrender/gpu/emulated_device.hpp"
#include "batchrender/gpu/gpu_backend.hpp"
#include "batchrender/math.hpp"
#include "batchrender/mesh.hpp"
#include "batchrender/raster.hpp"
#include "batchrender/renderer.hpp"
#include "batchrender/soft_backend.hpp"
#include "batchrender/tensor.hpp"
#include "batchrender/tiling.hpp"
