#pragma once

// Umbrella header for the datascope library.

#include "datascope/abstraction.hpp"
#include "datascope/core.hpp"
#include "datascope/datagen.hpp"
#include "datascope/envs.hpp"
#include "datascope/io.hpp"
#include "datascope/measures.hpp"
#include "datascope/offline.hpp"
#include "datascope/rng.hpp"
#include "datascope/shift.hpp"
#include "datascope/sketch.hpp"
#include "datascope/stats.hpp"
#include "datascope/sweep.hpp"
