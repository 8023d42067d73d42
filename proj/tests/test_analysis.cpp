#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ori/analysis.hpp"
#include "ori/errors.hpp"

using namespace ori;
using Labeled = std::pair<std::size_t, BenchmarkId>;

namespace {

std::vector<Labeled> four_records() {
  return {{0, BenchmarkId("MMLU")},
          {0, BenchmarkId("MMLU")},
          {0, BenchmarkId("BBH")},
          {1, BenchmarkId("BBH")}};
}

std::vector<BenchmarkId> mmlu_bbh() {
  return {BenchmarkId("MMLU"), BenchmarkId("BBH")};
}

}  // namespace

TEST_CASE("count_distribution counts exactly") {
  const auto records = four_records();
  const auto dist = analysis::count_distribution(records, 2, mmlu_bbh());
  REQUIRE(dist.cluster_count() == 2);
  REQUIRE(dist.benchmarks == mmlu_bbh());
  CHECK(dist.counts[0] == std::vector<std::uint64_t>{2, 1});
  CHECK(dist.counts[1] == std::vector<std::uint64_t>{0, 1});
  CHECK(dist.cluster_size(0) == 3);
  CHECK(dist.cluster_size(1) == 1);
}

TEST_CASE("count_distribution handles empty input and empty clusters") {
  const auto dist = analysis::count_distribution({}, 3, mmlu_bbh());
  REQUIRE(dist.cluster_count() == 3);
  for (const auto& row : dist.counts) {
    CHECK(row == std::vector<std::uint64_t>{0, 0});
  }

  const std::vector<Labeled> one{{2, BenchmarkId("BBH")}};
  const auto single = analysis::count_distribution(one, 3, mmlu_bbh());
  CHECK(single.counts[2] == std::vector<std::uint64_t>{0, 1});
  CHECK(single.cluster_size(0) == 0);
}

TEST_CASE("count_distribution validates labels and benchmarks") {
  const std::vector<Labeled> out_of_range{{5, BenchmarkId("MMLU")}};
  CHECK_THROWS_AS(analysis::count_distribution(out_of_range, 2, mmlu_bbh()),
                  ValidationError);

  const std::vector<Labeled> unknown{{0, BenchmarkId("GPQA")}};
  CHECK_THROWS_AS(analysis::count_distribution(unknown, 2, mmlu_bbh()), ValidationError);

  CHECK_THROWS_AS(analysis::count_distribution({}, 0, mmlu_bbh()), ValidationError);

  std::vector<BenchmarkId> dupes{BenchmarkId("MMLU"), BenchmarkId("mmlu")};
  CHECK_THROWS_AS(analysis::count_distribution({}, 1, dupes), ValidationError);
}

TEST_CASE("proportions normalizes rows and flags empties") {
  analysis::BenchmarkDistribution dist;
  dist.benchmarks = {BenchmarkId("A"), BenchmarkId("B"), BenchmarkId("C"),
                     BenchmarkId("D")};
  dist.counts = {{3, 1, 0, 0}, {0, 0, 0, 0}, {1, 1, 1, 1}};
  const auto profile = analysis::proportions(dist);

  CHECK(profile.proportions[0][0] == doctest::Approx(0.75));
  CHECK(profile.proportions[0][1] == doctest::Approx(0.25));
  CHECK(!profile.empty[0]);
  CHECK(profile.dominant[0] == BenchmarkId("A"));
  CHECK(profile.dominant_share[0] == doctest::Approx(0.75));

  CHECK(profile.empty[1]);
  CHECK(!profile.dominant[1].has_value());
  CHECK(profile.dominant_share[1] == 0.0);
  for (double p : profile.proportions[1]) CHECK(p == 0.0);

  for (double p : profile.proportions[2]) CHECK(p == doctest::Approx(0.25));

  // Non-empty rows sum to 1.
  for (std::size_t k = 0; k < dist.counts.size(); ++k) {
    if (profile.empty[k]) continue;
    double sum = 0.0;
    for (double p : profile.proportions[k]) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("dominant_benchmark picks max count with lexicographic ties") {
  analysis::BenchmarkDistribution dist;
  dist.benchmarks = mmlu_bbh();
  dist.counts = {{3, 1}, {2, 2}, {0, 0}};

  CHECK(analysis::dominant_benchmark(dist, 0) == BenchmarkId("MMLU"));
  // Tie at 2: BBH < MMLU lexicographically.
  CHECK(analysis::dominant_benchmark(dist, 1) == BenchmarkId("BBH"));
  CHECK_THROWS_AS(analysis::dominant_benchmark(dist, 2), ValidationError);
  CHECK_THROWS_AS(analysis::dominant_benchmark(dist, 9), ValidationError);
}

TEST_CASE("dominant_benchmark on the four-record example") {
  const auto dist = analysis::count_distribution(four_records(), 2, mmlu_bbh());
  CHECK(analysis::dominant_benchmark(dist, 0) == BenchmarkId("MMLU"));
  CHECK(analysis::dominant_benchmark(dist, 1) == BenchmarkId("BBH"));
}

TEST_CASE("dominance ignores column order") {
  analysis::BenchmarkDistribution forward;
  forward.benchmarks = {BenchmarkId("MMLU"), BenchmarkId("BBH")};
  forward.counts = {{2, 2}};
  analysis::BenchmarkDistribution backward;
  backward.benchmarks = {BenchmarkId("BBH"), BenchmarkId("MMLU")};
  backward.counts = {{2, 2}};
  CHECK(analysis::dominant_benchmark(forward, 0) ==
        analysis::dominant_benchmark(backward, 0));
}

TEST_CASE("dominant count is maximal against a brute-force recount") {
  // Property over a pseudo-random distribution.
  analysis::BenchmarkDistribution dist;
  dist.benchmarks = {BenchmarkId("A"), BenchmarkId("B"), BenchmarkId("C")};
  std::uint64_t state = 12345;
  for (int k = 0; k < 8; ++k) {
    std::vector<std::uint64_t> row(3);
    for (auto& cell : row) {
      state = state * 6364136223846793005ULL + 1442695040888963407ULL;
      cell = (state >> 33) % 7;
    }
    dist.counts.push_back(row);
  }
  for (std::size_t k = 0; k < dist.counts.size(); ++k) {
    if (dist.cluster_size(k) == 0) continue;
    const BenchmarkId winner = analysis::dominant_benchmark(dist, k);
    const auto it = std::find(dist.benchmarks.begin(), dist.benchmarks.end(), winner);
    const std::size_t j_star = static_cast<std::size_t>(it - dist.benchmarks.begin());
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(dist.counts[k][j_star] >= dist.counts[k][j]);
    }
  }
}

TEST_CASE("build_cluster_benchmark_map omits and reports empty clusters") {
  analysis::BenchmarkDistribution dist;
  dist.benchmarks = mmlu_bbh();
  dist.counts = {{2, 1}, {0, 0}, {0, 3}};
  const auto map = analysis::build_cluster_benchmark_map(dist);
  REQUIRE(map.dominant.size() == 2);
  CHECK(map.dominant.at(0) == BenchmarkId("MMLU"));
  CHECK(map.dominant.at(2) == BenchmarkId("BBH"));
  CHECK(map.empty_clusters == std::vector<std::size_t>{1});

  // Map values stay inside the declared benchmark set.
  for (const auto& [cluster, benchmark] : map.dominant) {
    CHECK(std::count(dist.benchmarks.begin(), dist.benchmarks.end(), benchmark) == 1);
  }
}

TEST_CASE("build_cluster_benchmark_map rejects all-empty distributions") {
  analysis::BenchmarkDistribution dist;
  dist.benchmarks = mmlu_bbh();
  dist.counts = {{0, 0}, {0, 0}};
  CHECK_THROWS_AS(analysis::build_cluster_benchmark_map(dist), ValidationError);
}

TEST_CASE("weakly_dominated_clusters applies the share threshold") {
  analysis::BenchmarkDistribution dist;
  dist.benchmarks = mmlu_bbh();
  dist.counts = {{9, 1}, {5, 5}, {1, 2}, {0, 0}};
  const auto profile = analysis::proportions(dist);
  // Shares: .9, .5, .667, empty. Threshold .7 flags clusters 1 and 2.
  CHECK(analysis::weakly_dominated_clusters(profile, 0.7) ==
        std::vector<std::size_t>{1, 2});
  CHECK(analysis::weakly_dominated_clusters(profile, 0.4).empty());
}

TEST_CASE("write_profile_csv emits the documented columns") {
  const auto dist = analysis::count_distribution(four_records(), 2, mmlu_bbh());
  std::ostringstream out;
  analysis::write_profile_csv(out, dist);
  std::istringstream lines(out.str());
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "cluster,benchmark,count,proportion,dominant");
  REQUIRE(std::getline(lines, line));
  CHECK(line.rfind("0,MMLU,2,", 0) == 0);
  CHECK(line.find("true") != std::string::npos);
  REQUIRE(std::getline(lines, line));
  CHECK(line.rfind("0,BBH,1,", 0) == 0);
  CHECK(line.find("false") != std::string::npos);
  // K * |benchmarks| data rows after the header.
  int rows = 2;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 4);
}
