#pragma once

// Umbrella header: every public component of the library.

#include "graphcaps/analysis/embeddings.hpp"
#include "graphcaps/analysis/tsne.hpp"
#include "graphcaps/dataset_io.hpp"
#include "graphcaps/experiment/config.hpp"
#include "graphcaps/experiment/grid.hpp"
#include "graphcaps/experiment/kfold.hpp"
#include "graphcaps/experiment/manifest.hpp"
#include "graphcaps/experiment/report.hpp"
#include "graphcaps/experiment/run.hpp"
#include "graphcaps/graph.hpp"
#include "graphcaps/labelling.hpp"
#include "graphcaps/models/capsnet.hpp"
#include "graphcaps/models/cnn.hpp"
#include "graphcaps/models/train.hpp"
#include "graphcaps/nn/adam.hpp"
#include "graphcaps/nn/capsule.hpp"
#include "graphcaps/nn/checkpoint.hpp"
#include "graphcaps/nn/conv.hpp"
#include "graphcaps/nn/dense.hpp"
#include "graphcaps/nn/grad_check.hpp"
#include "graphcaps/nn/loss.hpp"
#include "graphcaps/nn/tensor.hpp"
#include "graphcaps/selftest.hpp"
#include "graphcaps/tensor_cache.hpp"
#include "graphcaps/tensorizer.hpp"
