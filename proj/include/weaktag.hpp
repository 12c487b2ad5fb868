#pragma once

#include "weaktag/adam.hpp"
#include "weaktag/checkpoint.hpp"
#include "weaktag/corpus.hpp"
#include "weaktag/datasets.hpp"
#include "weaktag/evaluation.hpp"
#include "weaktag/features.hpp"
#include "weaktag/fft.hpp"
#include "weaktag/models.hpp"
#include "weaktag/params.hpp"
#include "weaktag/tensor.hpp"
#include "weaktag/training.hpp"
#include "weaktag/version.hpp"
#include "weaktag/wav.hpp"
