#pragma once

#include "collusion/core_model.hpp"
#include "collusion/detect.hpp"
#include "collusion/error.hpp"
#include "collusion/iforest.hpp"
#include "collusion/ingest.hpp"
#include "collusion/pairwise_features.hpp"
#include "collusion/service_api.hpp"
#include "collusion/simulate.hpp"
#include "collusion/social_graph.hpp"
