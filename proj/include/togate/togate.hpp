#pragma once

#include "togate/dataset.hpp"
#include "togate/environment.hpp"
#include "togate/evaluation.hpp"
#include "togate/io.hpp"
#include "togate/losses.hpp"
#include "togate/parallel.hpp"
#include "togate/policy.hpp"
#include "togate/rng.hpp"
#include "togate/training.hpp"
#include "togate/trajectory.hpp"
#include "togate/types.hpp"
