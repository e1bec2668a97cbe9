#pragma once

#include "redoff/checkpoint.hpp"
#include "redoff/config.hpp"
#include "redoff/controller.hpp"
#include "redoff/csv.hpp"
#include "redoff/drl.hpp"
#include "redoff/error.hpp"
#include "redoff/experiment.hpp"
#include "redoff/feature_selection.hpp"
#include "redoff/features.hpp"
#include "redoff/geo.hpp"
#include "redoff/metrics.hpp"
#include "redoff/myopic.hpp"
#include "redoff/nn.hpp"
#include "redoff/server_set.hpp"
#include "redoff/sim.hpp"
#include "redoff/stats.hpp"
#include "redoff/synthetic.hpp"
#include "redoff/trace.hpp"
#include "redoff/trace_io.hpp"
