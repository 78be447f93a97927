#pragma once

#include "missbench/core.hpp"
#include "missbench/datagen.hpp"
#include "missbench/missingness.hpp"
#include "missbench/featurize.hpp"
#include "missbench/imputers.hpp"
#include "missbench/ensemble.hpp"
#include "missbench/scheduler.hpp"
#include "missbench/io.hpp"
#include "missbench/bench.hpp"
