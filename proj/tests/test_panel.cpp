#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "strata/dgp.hpp"
#include "strata/panel.hpp"

using namespace strata;

TEST_CASE("wide panel csv round trips a simulated panel") {
  PopulationTable pop = generate_population(scenario_params(2), 3000, 5);
  ObservedPanel p = sample_observed(pop, 800, 9);
  std::ostringstream os;
  write_panel_csv(os, p);
  std::istringstream is(os.str());
  ObservedPanel q = read_panel_csv(is);
  REQUIRE(q.size() == p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    CHECK(q.v[i] == p.v[i]);
    for (int t = 0; t < 3; ++t) {
      CHECK(q.z[t][i] == p.z[t][i]);
      CHECK(q.s[t][i] == p.s[t][i]);
      CHECK(q.r[t][i] == p.r[t][i]);
      CHECK((std::isnan(q.y[t][i]) == std::isnan(p.y[t][i])));
      if (!std::isnan(p.y[t][i])) CHECK(q.y[t][i] == p.y[t][i]);
    }
  }
}

TEST_CASE("validation names the offending subject") {
  ObservedPanel p;
  p.n_waves = 3;
  p.id = {"alice", "bob"};
  p.v = {1.0, 2.0};
  p.z.assign(3, {0, 0});
  p.y.assign(3, {1.0, 1.0});
  p.s.assign(3, {1, 1});
  p.r.assign(3, {1, 1});

  SUBCASE("death must be absorbing") {
    p.s[1] = {0, 1};
    p.y[1][0] = std::numeric_limits<double>::quiet_NaN();
    p.s[2] = {1, 1};  // bob fine, alice resurrects
    p.y[2][0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(p.validate(),
                         "death is not absorbing for subject alice (alive at wave 3 after dying "
                         "at wave 2)",
                         std::runtime_error);
  }
  SUBCASE("treatment must be absorbing when configured") {
    p.z[1] = {1, 0};
    p.z[2] = {0, 0};
    CHECK_THROWS_AS(p.validate(), std::runtime_error);
    p.absorbing_treatment = false;
    CHECK_NOTHROW(p.validate());
  }
  SUBCASE("an outcome after death is rejected") {
    p.s[2] = {0, 1};
    CHECK_THROWS_AS(p.validate(), std::runtime_error);
  }
}

TEST_CASE("cross-regime survival oddities in external files are tolerated") {
  // counterfactual survival cells violating strict monotonicity (the
  // pre-assumption patterns of the worked example, subjects 5-7) must not
  // crash the reader; only observed-path cells are consumed
  const std::string csv =
      "id,v,z1,y1,y0,s1,s0,z2,y00,y01,y11,s00,s01,s11,z3,y000,y001,y011,y111\n"
      "s5,0.5,0,,2.2,1,1,0,3.3,,,1,0,1,0,4.4,,NA,\n"
      "s6,0.6,0,,2.3,1,1,0,3.4,,,0,1,1,NA,NA,NA,,\n";
  std::istringstream is(csv);
  ObservedPanel p = read_panel_csv(is);
  REQUIRE(p.size() == 2);
  CHECK(p.y[0][0] == 2.2);
  CHECK(p.y[1][0] == 3.3);
  CHECK(p.s[2][0] == 1);   // own-path survival from s00
  CHECK(p.y[2][0] == 4.4);
  CHECK(p.s[2][1] == 0);   // s6 dead at wave 3 under own path (s00=0)
  CHECK(std::isnan(p.y[2][1]));
}

TEST_CASE("dropout is an empty observed slot while alive") {
  const std::string csv =
      "id,v,z1,y1,y0,s1,s0,z2,y00,y01,y11,s00,s01,s11,z3,y000,y001,y011,y111\n"
      "a,0.1,1,7.5,,1,,1,,,8.5,,,1,1,,,,9.5\n"
      "b,0.2,1,,,1,,1,,,8.6,,,1,1,,,,9.6\n";
  std::istringstream is(csv);
  ObservedPanel p = read_panel_csv(is);
  CHECK(p.r[0][0] == 1);
  CHECK(p.r[0][1] == 0);  // alive, no value: dropout
  CHECK(std::isnan(p.y[0][1]));
  CHECK(p.s[0][1] == 1);
  CHECK(p.y[2][1] == 9.6);
  CHECK(p.r[2][1] == 1);
}

TEST_CASE("schema-based ingestion of external layouts") {
  {
    std::ofstream f("/tmp/strata_ext_panel.csv");
    f << "pid,age,base,shock1,shock2,cog1,cog2,alive1,alive2,resp1,resp2\n";
    f << "p1,61,3.5,0,1,17,15,1,1,1,1\n";
    f << "p2,59,2.0,0,0,18,NA,1,1,1,0\n";
    f << "p3,63,1.0,1,1,12,NA,1,0,1,NA\n";
  }
  {
    std::ofstream f("/tmp/strata_ext_schema.json");
    f << R"({"v": "base", "extra_baseline": ["age"], "id": "pid",
             "z": ["shock1", "shock2"], "y": ["cog1", "cog2"],
             "s": ["alive1", "alive2"], "r": ["resp1", "resp2"],
             "na_token": "NA", "absorbing_treatment": true})";
  }
  PanelSchema schema = PanelSchema::from_json_file("/tmp/strata_ext_schema.json");
  ObservedPanel p = read_panel_with_schema("/tmp/strata_ext_panel.csv", schema);
  REQUIRE(p.size() == 3);
  CHECK(p.n_waves == 2);
  CHECK(p.id[0] == "p1");
  CHECK(p.extra_baseline_names == std::vector<std::string>{"age"});
  CHECK(p.extra_baseline[0][2] == 63);
  CHECK(p.y[1][0] == 15);
  CHECK(p.r[1][1] == 0);
  CHECK(p.s[1][2] == 0);
  CHECK(std::isnan(p.y[1][2]));

  PanelSchema bad = schema;
  bad.v_column = "nope";
  CHECK_THROWS_WITH_AS(read_panel_with_schema("/tmp/strata_ext_panel.csv", bad),
                       "panel CSV missing mapped column: nope", std::runtime_error);
}

TEST_CASE("regime coding helpers") {
  PopulationTable pop = generate_population(scenario_params(3), 4000, 21);
  ObservedPanel p = sample_observed(pop, 1500, 3);
  int counts2[3] = {0, 0, 0};
  int counts3[4] = {0, 0, 0, 0};
  for (size_t i = 0; i < p.size(); ++i) {
    const int r2 = p.regime2(i);
    if (r2 >= 0) ++counts2[r2];
    const int r3 = p.regime3(i);
    if (r3 >= 0) ++counts3[r3];
    if (r3 >= 0) REQUIRE(r2 >= 0);
  }
  for (int c : counts2) CHECK(c > 30);
  for (int c : counts3) CHECK(c > 15);
}
