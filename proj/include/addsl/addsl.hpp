#pragma once

#include "addsl/error.hpp"
#include "addsl/geometry.hpp"
#include "addsl/imaging.hpp"
#include "addsl/annotation.hpp"
#include "addsl/dataset.hpp"
#include "addsl/detector.hpp"
#include "addsl/losses.hpp"
#include "addsl/eval.hpp"
