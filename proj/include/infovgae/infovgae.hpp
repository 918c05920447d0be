#pragma once

#include "analysis.hpp"
#include "autodiff.hpp"
#include "controller.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "matrix.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "rng.hpp"
#include "tc.hpp"
#include "trainer.hpp"
