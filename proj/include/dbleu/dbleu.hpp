#pragma once

#include "dbleu/corpus_io.hpp"
#include "dbleu/correlation.hpp"
#include "dbleu/error.hpp"
#include "dbleu/metrics.hpp"
#include "dbleu/study.hpp"
#include "dbleu/text.hpp"
