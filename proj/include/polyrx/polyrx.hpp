#pragma once

#include "polyrx/core.hpp"
#include "polyrx/eval.hpp"
#include "polyrx/io.hpp"
#include "polyrx/joint.hpp"
#include "polyrx/logreg.hpp"
#include "polyrx/mining.hpp"
#include "polyrx/recommend.hpp"
#include "polyrx/slim.hpp"
#include "polyrx/synth.hpp"
