// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "gpcn/tensor.hpp"

int main(int argc, char** argv) {
  gpcn::configure_allocator();
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
