#pragma once

// Umbrella header for the DivNet library.

#include "divnet/activation.hpp"
#include "divnet/config.hpp"
#include "divnet/csv.hpp"
#include "divnet/dataset.hpp"
#include "divnet/dpp.hpp"
#include "divnet/errors.hpp"
#include "divnet/experiment.hpp"
#include "divnet/linalg.hpp"
#include "divnet/loaders.hpp"
#include "divnet/matrix.hpp"
#include "divnet/mlp.hpp"
#include "divnet/prune.hpp"
#include "divnet/rng.hpp"
#include "divnet/svg.hpp"
