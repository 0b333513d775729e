#pragma once

#include "convert.hpp"
#include "data_model.hpp"
#include "error.hpp"
#include "evaluation/auc.hpp"
#include "evaluation/config.hpp"
#include "evaluation/experiment.hpp"
#include "evaluation/parallel.hpp"
#include "evaluation/report.hpp"
#include "evaluation/splits.hpp"
#include "features.hpp"
#include "learners/gbt.hpp"
#include "learners/hyperparams.hpp"
#include "learners/logreg.hpp"
#include "learners/model.hpp"
#include "learners/standardize.hpp"
#include "learners/svm.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "synth.hpp"
