#pragma once

// Umbrella header: the whole library.

#include "metaclust/autodiff.hpp"
#include "metaclust/checkpoint.hpp"
#include "metaclust/cluster_model.hpp"
#include "metaclust/enumeration.hpp"
#include "metaclust/experiment.hpp"
#include "metaclust/graph.hpp"
#include "metaclust/meta_model.hpp"
#include "metaclust/metrics.hpp"
#include "metaclust/noise.hpp"
#include "metaclust/params.hpp"
#include "metaclust/report.hpp"
#include "metaclust/rng.hpp"
#include "metaclust/sbm.hpp"
#include "metaclust/similarity.hpp"
#include "metaclust/tape.hpp"
#include "metaclust/trainer.hpp"
#include "metaclust/verify.hpp"
