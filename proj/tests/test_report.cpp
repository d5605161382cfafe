#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <json.hpp>

#include "metaclust/report.hpp"
#include "helpers.hpp"

using namespace metaclust;

namespace {

MetricsRow sample_row() {
  MetricsRow r;
  r.dataset = "toy";
  r.noise_level = 0.3;
  r.seed = 42;
  r.variant = "metagc";
  r.f1 = 0.75;
  r.nmi = 0.5;
  r.modularity = 1.0 / 3.0;
  r.prauc = 0.875;
  r.hits = 0.9;
  r.epochs = 210;
  r.wall_ms = 1234.5;
  return r;
}

}  // namespace

TEST_CASE("csv rows carry every field in schema order") {
  const MetricsRow r = sample_row();
  const std::string line = to_csv_row(r);
  REQUIRE(line == "toy,0.3,42,metagc,0.75,0.5," + detail::format_double(1.0 / 3.0) +
                      ",0.875,0.9,210,1234.5");
  REQUIRE(std::string(kRowHeader) ==
          "dataset,noise_level,seed,variant,f1,nmi,modularity,prauc,hits,epochs,wall_ms");
}

TEST_CASE("missing ranking metrics serialize as empty fields and json nulls") {
  MetricsRow r = sample_row();
  r.prauc = std::numeric_limits<double>::quiet_NaN();
  r.hits = std::numeric_limits<double>::quiet_NaN();
  const std::string line = to_csv_row(r);
  REQUIRE(line.find(",,") != std::string::npos);

  const nlohmann::json j = row_to_json(r);
  REQUIRE(j.at("prauc").is_null());
  REQUIRE(j.at("hits").is_null());
  REQUIRE(j.at("dataset") == "toy");
  REQUIRE(j.at("seed") == 42);
  REQUIRE(j.at("epochs") == 210);
}

TEST_CASE("csv files round trip exactly") {
  TempDir tmp;
  std::vector<MetricsRow> rows{sample_row(), sample_row()};
  rows[1].seed = 43;
  rows[1].variant = "metagc-x";
  rows[1].prauc = std::numeric_limits<double>::quiet_NaN();
  rows[1].hits = std::numeric_limits<double>::quiet_NaN();
  rows[1].nmi = 0.1234567890123456789;  // rounds to nearest double

  const std::string path = tmp.path() + "/rows.csv";
  write_rows_csv(rows, path);
  const auto back = parse_rows_csv(path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(back[i].dataset == rows[i].dataset);
    REQUIRE(back[i].noise_level == rows[i].noise_level);
    REQUIRE(back[i].seed == rows[i].seed);
    REQUIRE(back[i].variant == rows[i].variant);
    REQUIRE(back[i].f1 == rows[i].f1);
    REQUIRE(back[i].nmi == rows[i].nmi);
    REQUIRE(back[i].modularity == rows[i].modularity);
    REQUIRE(back[i].epochs == rows[i].epochs);
    REQUIRE(back[i].wall_ms == rows[i].wall_ms);
  }
  REQUIRE(back[0].prauc == rows[0].prauc);
  REQUIRE(std::isnan(back[1].prauc));
  REQUIRE(std::isnan(back[1].hits));

  // Writing the parsed rows again reproduces the file byte for byte.
  const std::string again = tmp.path() + "/rows2.csv";
  write_rows_csv(back, again);
  REQUIRE(read_file(again) == read_file(path));
}

TEST_CASE("parsing rejects malformed files") {
  TempDir tmp;
  SECTION("wrong header") {
    const std::string path = tmp.path() + "/bad.csv";
    write_file(path, "dataset,nope\n");
    REQUIRE_THROWS(parse_rows_csv(path));
  }
  SECTION("wrong field count") {
    const std::string path = tmp.path() + "/bad2.csv";
    write_file(path, std::string(kRowHeader) + "\n" + "toy,0.3,1,metagc,0.5\n");
    REQUIRE_THROWS(parse_rows_csv(path));
  }
  SECTION("non numeric field") {
    const std::string path = tmp.path() + "/bad3.csv";
    write_file(path,
               std::string(kRowHeader) + "\n" + "toy,x,1,metagc,0,0,0,,,10,1\n");
    REQUIRE_THROWS(parse_rows_csv(path));
  }
  SECTION("missing file") { REQUIRE_THROWS(parse_rows_csv(tmp.path() + "/nope.csv")); }
}

TEST_CASE("aggregation groups by noise level and variant") {
  std::vector<MetricsRow> rows;
  for (std::uint64_t s : {1, 2}) {
    MetricsRow r = sample_row();
    r.seed = s;
    r.nmi = s == 1 ? 0.2 : 0.4;
    rows.push_back(r);
  }
  MetricsRow other = sample_row();
  other.variant = "metagc-x";
  other.prauc = std::numeric_limits<double>::quiet_NaN();
  other.hits = std::numeric_limits<double>::quiet_NaN();
  rows.push_back(other);
  MetricsRow high = sample_row();
  high.noise_level = 0.6;
  rows.push_back(high);

  const auto aggs = aggregate_rows(rows);
  REQUIRE(aggs.size() == 3);
  // sorted by noise, then variant
  REQUIRE(aggs[0].noise_level == 0.3);
  REQUIRE(aggs[0].variant == "metagc");
  REQUIRE(aggs[1].variant == "metagc-x");
  REQUIRE(aggs[2].noise_level == 0.6);

  REQUIRE(aggs[0].runs == 2);
  REQUIRE_THAT(aggs[0].nmi.mean, Catch::Matchers::WithinAbs(0.3, 1e-15));
  REQUIRE_THAT(aggs[0].nmi.stddev,
               Catch::Matchers::WithinAbs(std::sqrt(0.02), 1e-12));

  // single-member group: std collapses to zero
  REQUIRE(aggs[2].runs == 1);
  REQUIRE(aggs[2].nmi.stddev == 0.0);

  // all-NaN metric yields an empty stat
  REQUIRE(aggs[1].prauc.count == 0);
  REQUIRE(std::isnan(aggs[1].prauc.mean));
}

TEST_CASE("aggregate outputs") {
  std::vector<MetricsRow> rows{sample_row()};
  const auto aggs = aggregate_rows(rows);

  TempDir tmp;
  const std::string path = tmp.path() + "/aggregate.csv";
  write_aggregate_csv(aggs, path);
  const std::string text = read_file(path);
  REQUIRE(text.find("noise_level,variant,runs") == 0);
  REQUIRE(text.find("metagc") != std::string::npos);

  const std::string table = format_aggregate_table(aggs);
  REQUIRE(table.find("variant") != std::string::npos);
  REQUIRE(table.find("0.7500+-0.0000") != std::string::npos);
  // one header line plus one data line
  REQUIRE(std::count(table.begin(), table.end(), '\n') == 2);
}
