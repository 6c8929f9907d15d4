#pragma once

#include "mahavar/error.hpp"
#include "mahavar/etf_lab.hpp"
#include "mahavar/feature_store.hpp"
#include "mahavar/gaussian_stats.hpp"
#include "mahavar/metrics.hpp"
#include "mahavar/npy.hpp"
#include "mahavar/scorers.hpp"
#include "mahavar/synthetic.hpp"
#include "mahavar/tuner.hpp"
#include "mahavar/types.hpp"
