#pragma once

// Kernel-based conditional independence testing: the classical KCI test and
// its scalable, embarrassingly parallel FastKCI variant, plus synthetic data
// generators and a PC skeleton search for benchmarking.

#include "fastkci/csv.hpp"
#include "fastkci/data.hpp"
#include "fastkci/dgp.hpp"
#include "fastkci/errors.hpp"
#include "fastkci/fast_kci.hpp"
#include "fastkci/kci.hpp"
#include "fastkci/kernel.hpp"
#include "fastkci/mixture.hpp"
#include "fastkci/parallel.hpp"
#include "fastkci/pc.hpp"
#include "fastkci/rng.hpp"
