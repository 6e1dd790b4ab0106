#pragma once

// Everything: data, CDBN, semantic and population coding, classifiers,
// adversarial images, checkpoints and the experiment harness.

#include "bsnn/error.hpp"
#include "bsnn/tensor.hpp"
#include "bsnn/conv.hpp"
#include "bsnn/data_io.hpp"
#include "bsnn/crbm.hpp"
#include "bsnn/cdbn.hpp"
#include "bsnn/semantic.hpp"
#include "bsnn/population.hpp"
#include "bsnn/classifier.hpp"
#include "bsnn/pipeline.hpp"
#include "bsnn/adversarial.hpp"
#include "bsnn/serialization.hpp"
#include "bsnn/harness.hpp"
