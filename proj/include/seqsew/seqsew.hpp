#pragma once

// Umbrella header.

#include <seqsew/core.hpp>
#include <seqsew/prior.hpp>
#include <seqsew/posterior.hpp>
#include <seqsew/forecasters.hpp>
#include <seqsew/bounds.hpp>
#include <seqsew/batch.hpp>
#include <seqsew/datagen.hpp>
#include <seqsew/io.hpp>
#include <seqsew/experiment.hpp>
