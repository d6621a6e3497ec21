// SPDX-License-Identifier: Apache-2.0
#include "grad_suite.hpp"
#include "test_util.hpp"

namespace gpcn {
namespace {

class CompositeGradcheck : public ::testing::TestWithParam<testing::CompositeCase> {};

TEST_P(CompositeGradcheck, MatchesFiniteDifferences) {
  const auto r = GetParam().run();
  EXPECT_LE(r.worst_rel, testing::kGradTol) << "input " << r.worst_input;
}

INSTANTIATE_TEST_SUITE_P(Blocks, CompositeGradcheck, ::testing::ValuesIn(testing::composite_cases()),
                         [](const ::testing::TestParamInfo<testing::CompositeCase>& info) { return info.param.name; });

}  // namespace
}  // namespace gpcn
