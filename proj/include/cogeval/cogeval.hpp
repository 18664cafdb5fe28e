#pragma once

#include "cognitive_data.hpp"
#include "common.hpp"
#include "embedding_store.hpp"
#include "experiment.hpp"
#include "manifest.hpp"
#include "network.hpp"
#include "pipeline.hpp"
#include "reporting.hpp"
#include "rng.hpp"
#include "serialization.hpp"
#include "significance.hpp"
