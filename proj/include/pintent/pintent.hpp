#pragma once

#include "pintent/cli.hpp"
#include "pintent/dataset.hpp"
#include "pintent/embedding.hpp"
#include "pintent/energy.hpp"
#include "pintent/error.hpp"
#include "pintent/evaluation.hpp"
#include "pintent/features.hpp"
#include "pintent/forest.hpp"
#include "pintent/hyperparams.hpp"
#include "pintent/ingest.hpp"
#include "pintent/io.hpp"
#include "pintent/linalg.hpp"
#include "pintent/logistic.hpp"
#include "pintent/models.hpp"
#include "pintent/neural.hpp"
#include "pintent/nmf.hpp"
#include "pintent/random.hpp"
#include "pintent/scaler.hpp"
#include "pintent/synth.hpp"
