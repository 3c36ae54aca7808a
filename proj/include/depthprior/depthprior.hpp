#pragma once

#include "depthprior/core.hpp"
#include "depthprior/io.hpp"
#include "depthprior/depthnorm.hpp"
#include "depthprior/supervise.hpp"
#include "depthprior/spline.hpp"
#include "depthprior/matching.hpp"
#include "depthprior/coco.hpp"
#include "depthprior/optimizer.hpp"
#include "depthprior/dct.hpp"
#include "depthprior/hetsim.hpp"
