// SPDX-License-Identifier: Apache-2.0
#pragma once

// Convenience umbrella for the whole library.

#include "splatsem/camera.hpp"
#include "splatsem/dense_map.hpp"
#include "splatsem/errors.hpp"
#include "splatsem/fusion.hpp"
#include "splatsem/gaussian.hpp"
#include "splatsem/losses.hpp"
#include "splatsem/metrics.hpp"
#include "splatsem/render.hpp"
#include "splatsem/rng.hpp"
#include "splatsem/synth.hpp"
#include "splatsem/voxelize.hpp"
#include "splatsem/warp.hpp"
