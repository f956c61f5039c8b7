// Writes the canonical task configs under the given directory (default: fixtures).

#include <filesystem>
#include <iostream>

#include "effbound/effbound.hpp"
#include "effbound/fixtures.hpp"

using namespace effbound;

namespace {

json levels_json(const NestedPartition& part) {
  json levels = json::array();
  for (int n = 1; n <= part.depth(); ++n) levels.push_back(part.partition_at(n));
  return levels;
}

void write(const std::filesystem::path& dir, const std::string& name, const json& j) {
  write_atomic((dir / name).string(), j.dump(2) + "\n");
  std::cout << (dir / name).string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "fixtures";
  std::filesystem::create_directories(dir);
  const json mean = {{"kind", "mean"}};

  json d1 = {{"dgp", dgp_to_json(fixtures::d1())}, {"moment", mean}};
  d1["simulate"] = {{"n", 100000},
                    {"seed", 20261015},
                    {"regimes", {"known", "parametric", "unknown"}},
                    {"study", {{"partition", {0, 1}}, {"probs", "known"}, {"replications", 1000}, {"n", 2000}}}};
  write(dir, "d1.json", d1);

  json d1q = {{"dgp", dgp_to_json(fixtures::d1())}, {"moment", {{"kind", "quantile"}, {"tau", 0.5}}}};
  d1q["simulate"] = {{"n", 100000}, {"seed", 20261015}};
  write(dir, "d1_quantile.json", d1q);

  json d2 = {{"dgp", dgp_to_json(fixtures::d2())}, {"moment", mean}};
  d2["simulate"] = {{"n", 100000}, {"seed", 20261015}};
  write(dir, "d2.json", d2);

  const auto dyadic = fixtures::d3_dyadic_partition();
  json d3 = {{"dgp", dgp_to_json(fixtures::d3_stratified())}, {"moment", mean}};
  d3["sequence"] = {{"family", "stratified_nested"}, {"partition", {{"dyadic_depth", 4}}}, {"max_depth", 4}};
  json parts = json::array();
  for (int n = 0; n <= dyadic->depth(); ++n) parts.push_back(dyadic->partition_at(n));
  d3["decompose"] = {{"partitions", parts}};
  write(dir, "d3.json", d3);

  json frozen = {{"dgp", dgp_to_json(fixtures::d3_stratified())}, {"moment", mean}};
  frozen["sequence"] = {{"family", "stratified_nested"},
                        {"partition", {{"levels", levels_json(*fixtures::d3_frozen_partition())}}},
                        {"max_depth", 4}};
  write(dir, "d3_frozen.json", frozen);

  json full = {{"dgp", dgp_to_json(fixtures::d3_logistic_full())}, {"moment", mean}};
  full["sequence"] = {{"family", "logistic_full"}, {"max_depth", 16}};
  write(dir, "d3_logistic_full.json", full);

  json deg = {{"dgp", dgp_to_json(fixtures::d3_logistic_degenerate())}, {"moment", mean}};
  deg["sequence"] = {{"family", "logistic_degenerate"}, {"max_depth", 16}};
  write(dir, "d3_logistic_degenerate.json", deg);
}
