#include "test_support.hpp"
#include "morphofit/morphofit.hpp"
