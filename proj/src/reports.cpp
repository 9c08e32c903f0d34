#include "limset/core.hpp"
