#pragma once

// libtorch's logging header defines CHECK; pull it in first, drop that macro,
// then let doctest define its own.
#include <torch/torch.h>
#undef CHECK
#include <doctest.h>
