#pragma once

/**
 * @file patchy.hpp
 * @brief Umbrella header.
 */

#include "patchy/analyze.hpp"
#include "patchy/constants.hpp"
#include "patchy/core.hpp"
#include "patchy/fixtures.hpp"
#include "patchy/geometry.hpp"
#include "patchy/integrate.hpp"
#include "patchy/patchfield.hpp"
#include "patchy/scenario.hpp"
#include "patchy/signal.hpp"
#include "patchy/studies.hpp"
#include "patchy/trajectory.hpp"
