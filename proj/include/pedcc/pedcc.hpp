#pragma once

#include "pedcc/numeric.hpp"
#include "pedcc/centroids.hpp"
#include "pedcc/losses.hpp"
#include "pedcc/mlp.hpp"
#include "pedcc/dataset.hpp"
#include "pedcc/metrics.hpp"
#include "pedcc/trainer.hpp"
#include "pedcc/io.hpp"
