#pragma once

#include "ncsn/adam.hpp"
#include "ncsn/autodiff.hpp"
#include "ncsn/checkpoint.hpp"
#include "ncsn/config.hpp"
#include "ncsn/csv.hpp"
#include "ncsn/distributions.hpp"
#include "ncsn/error.hpp"
#include "ncsn/experiments.hpp"
#include "ncsn/network.hpp"
#include "ncsn/objectives.hpp"
#include "ncsn/plot.hpp"
#include "ncsn/random.hpp"
#include "ncsn/samplers.hpp"
#include "ncsn/schedule.hpp"
#include "ncsn/tensor.hpp"
#include "ncsn/trainer.hpp"
