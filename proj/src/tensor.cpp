#include "seflow/tensor.hpp"

namespace seflow::autograd {

namespace {
thread_local int g_nograd_depth = 0;
}

bool enabled() { return g_nograd_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_nograd_depth; }
NoGradGuard::~NoGradGuard() { --g_nograd_depth; }

}  // namespace seflow::autograd
