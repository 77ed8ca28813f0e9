#pragma once

#include "xformtree/errors.hpp"
#include "xformtree/mat4.hpp"
#include "xformtree/pointset.hpp"
#include "xformtree/geometry_io.hpp"
#include "xformtree/motion_track.hpp"
#include "xformtree/tree.hpp"
#include "xformtree/registration.hpp"
#include "xformtree/motion.hpp"
#include "xformtree/dpw.hpp"
