#pragma once

// Everything except the command line.

#include "binomial.hpp"
#include "chains.hpp"
#include "change_record.hpp"
#include "classifier.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "features.hpp"
#include "hash.hpp"
#include "rng.hpp"
#include "simulate.hpp"
#include "snapshot.hpp"
#include "sorted_sample.hpp"
#include "theory.hpp"
#include "units.hpp"
