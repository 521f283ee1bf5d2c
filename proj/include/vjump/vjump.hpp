/// @file vjump.hpp Umbrella header for the velocity-jump simulator and sampler.
#pragma once

#include "diagnostics.hpp"
#include "distributions.hpp"
#include "gaussian.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "model.hpp"
#include "numeric.hpp"
#include "params.hpp"
#include "proposals.hpp"
#include "report.hpp"
#include "sampler.hpp"
