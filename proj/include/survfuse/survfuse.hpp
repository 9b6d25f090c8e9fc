// Umbrella header.
#pragma once

#include "autoencoder.hpp"
#include "blending.hpp"
#include "cohort.hpp"
#include "config.hpp"
#include "core.hpp"
#include "distill.hpp"
#include "fusion.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "nn.hpp"
#include "pooling.hpp"
#include "survival.hpp"
#include "synth.hpp"
#include "train.hpp"
#include "types.hpp"
