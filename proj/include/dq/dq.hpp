#pragma once

// Umbrella header for the dataset quantization library.

#include "dq/binner.hpp"
#include "dq/core.hpp"
#include "dq/diagnostics.hpp"
#include "dq/gain_engine.hpp"
#include "dq/hash.hpp"
#include "dq/npy.hpp"
#include "dq/parallel.hpp"
#include "dq/patchmask.hpp"
#include "dq/sampler.hpp"
#include "dq/serialize.hpp"
