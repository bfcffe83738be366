// morphofit.hpp - umbrella header.
#pragma once

#include "morphofit/core.hpp"
#include "morphofit/mesh.hpp"
#include "morphofit/obj_io.hpp"
#include "morphofit/nearest.hpp"
#include "morphofit/template_model.hpp"
#include "morphofit/measure.hpp"
#include "morphofit/synth.hpp"
#include "morphofit/prealign.hpp"
#include "morphofit/nricp.hpp"
#include "morphofit/regress.hpp"
#include "morphofit/eval.hpp"
#include "morphofit/pipeline.hpp"
