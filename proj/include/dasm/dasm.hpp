#pragma once

#include "dasm/linalg.hpp"
#include "dasm/random.hpp"
#include "dasm/model.hpp"
#include "dasm/qp_builder.hpp"
#include "dasm/fabric.hpp"
#include "dasm/condense.hpp"
#include "dasm/dcg.hpp"
#include "dasm/asm.hpp"
#include "dasm/admm.hpp"
#include "dasm/oracle.hpp"
#include "dasm/experiment.hpp"
