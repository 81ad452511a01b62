#include "strata/panel.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "strata/csvio.hpp"

namespace strata {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string ObservedPanel::subject_label(size_t i) const {
  if (i < id.size() && !id[i].empty()) return id[i];
  return "row " + std::to_string(i + 1);
}

void ObservedPanel::validate() const {
  const size_t n = size();
  for (int t = 0; t < n_waves; ++t) {
    if (z[t].size() != n || y[t].size() != n || s[t].size() != n || r[t].size() != n) {
      throw std::runtime_error("panel wave arrays have inconsistent lengths");
    }
  }
  for (size_t i = 0; i < n; ++i) {
    for (int t = 0; t + 1 < n_waves; ++t) {
      if (s[t][i] == 0 && s[t + 1][i] == 1) {
        throw std::runtime_error("death is not absorbing for subject " + subject_label(i) +
                                 " (alive at wave " + std::to_string(t + 2) +
                                 " after dying at wave " + std::to_string(t + 1) + ")");
      }
      if (absorbing_treatment && z[t][i] == 1 && z[t + 1][i] == 0) {
        throw std::runtime_error("treatment is not absorbing for subject " + subject_label(i) +
                                 " (z=1 at wave " + std::to_string(t + 1) + ", z=0 at wave " +
                                 std::to_string(t + 2) + ")");
      }
    }
    for (int t = 0; t < n_waves; ++t) {
      if (s[t][i] == 0 && !std::isnan(y[t][i])) {
        throw std::runtime_error("subject " + subject_label(i) + " has an outcome at wave " +
                                 std::to_string(t + 1) + " after death");
      }
    }
  }
}

int ObservedPanel::regime2(size_t i) const {
  if (n_waves < 2 || s[1][i] != 1 || z[1][i] < 0) return -1;
  if (z[0][i] == 1) return 2;
  return z[1][i] == 1 ? 1 : 0;
}

int ObservedPanel::regime3(size_t i) const {
  if (n_waves < 3 || s[2][i] != 1 || z[2][i] < 0) return -1;
  const int r2 = z[0][i] == 1 ? 2 : (z[1][i] == 1 ? 1 : 0);
  if (r2 == 2) return 3;
  if (r2 == 1) return 2;
  return z[2][i] == 1 ? 1 : 0;
}

namespace {

const std::vector<std::string>& wide_header3() {
  static const std::vector<std::string> h = {"id",  "v",   "z1",  "y1",  "y0",   "s1",  "s0",
                                             "z2",  "y00", "y01", "y11", "s00",  "s01", "s11",
                                             "z3",  "y000", "y001", "y011", "y111"};
  return h;
}

std::string dcell(double x, const std::string& na, bool structural_na) {
  if (std::isnan(x)) return structural_na ? na : "";
  return format_double(x);
}

}  // namespace

void write_panel_csv(std::ostream& os, const ObservedPanel& p, const std::string& na) {
  if (p.n_waves != 3) {
    throw std::runtime_error("wide panel CSV layout covers three-wave panels; got " +
                             std::to_string(p.n_waves));
  }
  write_csv_row(os, wide_header3());
  const size_t n = p.size();
  for (size_t i = 0; i < n; ++i) {
    const int z1 = p.z[0][i];
    const int alive2 = p.s[1][i];
    const int alive3 = p.s[2][i];
    const int r2 = p.regime2(i);
    const int r3 = p.regime3(i);

    // observed wave-1 outcome slot + unknown counterfactual slot
    std::string y1c = "", y0c = "";
    if (z1 == 1) {
      y1c = dcell(p.y[0][i], na, false);
    } else {
      y0c = dcell(p.y[0][i], na, false);
    }

    // wave-2 survival: observed under own regime; counterfactuals only when
    // derivable (S1=1 => S0=1 ; S0=0 => S1=0)
    std::string s1c = "", s0c = "";
    if (z1 == 1) {
      s1c = std::to_string(alive2);
      if (alive2 == 1) s0c = "1";
    } else {
      s0c = std::to_string(alive2);
      if (alive2 == 0) s1c = "0";
    }

    std::string y00c = "", y01c = "", y11c = "";
    if (z1 == 1 && alive2 == 0) y11c = na;         // dead under own regime
    if (z1 == 0 && alive2 == 0) y00c = y01c = na;  // dead under own regime
    if (r2 == 0) y00c = dcell(p.y[1][i], na, false);
    if (r2 == 1) y01c = dcell(p.y[1][i], na, false);
    if (r2 == 2) y11c = dcell(p.y[1][i], na, false);

    // wave-3 survival: observed + monotone/absorbing derivations
    int s00 = -1, s01 = -1, s11 = -1;
    if (r2 == 0) s00 = alive3;
    if (r2 == 1) s01 = alive3;
    if (r2 == 2) s11 = alive3;
    if (z1 == 1 && alive2 == 0) s11 = 0;
    if (z1 == 0 && alive2 == 0) s00 = s01 = s11 = 0;
    if (s11 == 1) s01 = 1;
    if (s01 == 1) s00 = 1;
    if (s00 == 0) s01 = 0;
    if (s01 == 0) s11 = 0;
    auto icell = [](int x) { return x < 0 ? std::string("") : std::to_string(x); };

    std::string y000c = "", y001c = "", y011c = "", y111c = "";
    if (s00 == 0) y000c = y001c = na;
    if (s01 == 0) y011c = na;
    if (s11 == 0) y111c = na;
    if (r3 == 0) y000c = dcell(p.y[2][i], na, false);
    if (r3 == 1) y001c = dcell(p.y[2][i], na, false);
    if (r3 == 2) y011c = dcell(p.y[2][i], na, false);
    if (r3 == 3) y111c = dcell(p.y[2][i], na, false);

    auto zcell = [&na](int v) { return v < 0 ? na : std::to_string(v); };
    write_csv_row(os, {p.subject_label(i), format_double(p.v[i]), std::to_string(z1), y1c, y0c,
                       s1c, s0c, zcell(alive2 ? p.z[1][i] : -1), y00c, y01c, y11c, icell(s00),
                       icell(s01), icell(s11), zcell(alive3 ? p.z[2][i] : -1), y000c, y001c,
                       y011c, y111c});
  }
}

void write_panel_csv_file(const std::string& path, const ObservedPanel& p, const std::string& na) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  write_panel_csv(f, p, na);
}

ObservedPanel read_panel_csv(std::istream& is, const std::string& na) {
  CsvTable t = read_csv(is);
  const auto& want = wide_header3();
  std::vector<int> col(want.size());
  for (size_t j = 0; j < want.size(); ++j) {
    col[j] = t.column(want[j]);
    if (col[j] < 0 && want[j] != "id") {
      throw std::runtime_error("panel CSV missing column: " + want[j]);
    }
  }
  auto get = [&](const std::vector<std::string>& row, size_t j) -> const std::string& {
    static const std::string empty;
    return col[j] < 0 ? empty : row[static_cast<size_t>(col[j])];
  };
  const size_t n = t.rows.size();
  ObservedPanel p;
  p.n_waves = 3;
  p.id.resize(n);
  p.v.resize(n);
  p.z.assign(3, std::vector<int8_t>(n, -1));
  p.y.assign(3, std::vector<double>(n, kNaN));
  p.s.assign(3, std::vector<int8_t>(n, 0));
  p.r.assign(3, std::vector<int8_t>(n, 0));

  auto num = [&na](const std::string& s) { return s.empty() || s == na ? kNaN : std::stod(s); };
  auto flag = [&na](const std::string& s) {
    return s.empty() || s == na ? int8_t{-1} : static_cast<int8_t>(std::stoi(s));
  };

  for (size_t i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    if (row.size() < want.size() - 1) {
      throw std::runtime_error("panel CSV line " + std::to_string(i + 2) + ": expected " +
                               std::to_string(want.size()) + " fields, got " +
                               std::to_string(row.size()));
    }
    p.id[i] = col[0] >= 0 ? get(row, 0) : "";
    try {
      p.v[i] = num(get(row, 1));
      const int z1 = flag(get(row, 2));
      if (z1 < 0) throw std::runtime_error("z1 is required");
      p.z[0][i] = static_cast<int8_t>(z1);
      p.s[0][i] = 1;
      p.y[0][i] = z1 == 1 ? num(get(row, 3)) : num(get(row, 4));
      p.r[0][i] = std::isnan(p.y[0][i]) ? 0 : 1;

      // survival under own regime; ignore non-derivable counterfactual cells
      const int s_own2 = z1 == 1 ? flag(get(row, 5)) : flag(get(row, 6));
      if (s_own2 < 0) {
        throw std::runtime_error("survival under the observed regime is required (s" +
                                 std::string(z1 == 1 ? "1" : "0") + ")");
      }
      p.s[1][i] = static_cast<int8_t>(s_own2);
      if (s_own2 == 1) {
        const int z2 = flag(get(row, 7));
        p.z[1][i] = static_cast<int8_t>(z2);
        const int r2 = z1 == 1 ? 2 : (z2 == 1 ? 1 : (z2 == 0 ? 0 : -1));
        if (r2 >= 0) {
          p.y[1][i] = num(get(row, static_cast<size_t>(8 + r2)));
          p.r[1][i] = std::isnan(p.y[1][i]) ? 0 : 1;
          const int s_own3 = flag(get(row, static_cast<size_t>(11 + r2)));
          p.s[2][i] = static_cast<int8_t>(s_own3 < 0 ? 0 : s_own3);
          if (p.s[2][i] == 1) {
            const int z3 = flag(get(row, 14));
            p.z[2][i] = static_cast<int8_t>(z3);
            const int r3 = r2 == 2 ? 3 : (r2 == 1 ? 2 : (z3 == 1 ? 1 : (z3 == 0 ? 0 : -1)));
            if (r3 >= 0) {
              p.y[2][i] = num(get(row, static_cast<size_t>(15 + r3)));
              p.r[2][i] = std::isnan(p.y[2][i]) ? 0 : 1;
            }
          }
        }
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("panel CSV line " + std::to_string(i + 2) + ": " + e.what());
    }
  }
  p.validate();
  return p;
}

ObservedPanel read_panel_csv_file(const std::string& path, const std::string& na) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open panel CSV: " + path);
  return read_panel_csv(f, na);
}

PanelSchema PanelSchema::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open schema file: " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  PanelSchema s;
  s.v_column = j.at("v").get<std::string>();
  if (j.contains("extra_baseline")) {
    s.extra_baseline = j["extra_baseline"].get<std::vector<std::string>>();
  }
  s.z_columns = j.at("z").get<std::vector<std::string>>();
  s.y_columns = j.at("y").get<std::vector<std::string>>();
  s.s_columns = j.at("s").get<std::vector<std::string>>();
  if (j.contains("r")) s.r_columns = j["r"].get<std::vector<std::string>>();
  if (j.contains("id")) s.id_column = j["id"].get<std::string>();
  if (j.contains("na_token")) s.na_token = j["na_token"].get<std::string>();
  if (j.contains("absorbing_treatment")) {
    s.absorbing_treatment = j["absorbing_treatment"].get<bool>();
  }
  const size_t T = s.z_columns.size();
  if (s.y_columns.size() != T || s.s_columns.size() != T ||
      (!s.r_columns.empty() && s.r_columns.size() != T)) {
    throw std::runtime_error("schema wave column lists must have equal length");
  }
  if (T == 0) throw std::runtime_error("schema needs at least one wave");
  return s;
}

ObservedPanel read_panel_with_schema(const std::string& csv_path, const PanelSchema& schema) {
  CsvTable t = read_csv_file(csv_path);
  auto need = [&](const std::string& name) {
    int c = t.column(name);
    if (c < 0) throw std::runtime_error("panel CSV missing mapped column: " + name);
    return c;
  };
  const int T = static_cast<int>(schema.z_columns.size());
  const int vcol = need(schema.v_column);
  std::vector<int> zc(T), yc(T), sc(T), rc(T, -1), xb;
  for (int w = 0; w < T; ++w) {
    zc[w] = need(schema.z_columns[w]);
    yc[w] = need(schema.y_columns[w]);
    sc[w] = need(schema.s_columns[w]);
    if (!schema.r_columns.empty()) rc[w] = need(schema.r_columns[w]);
  }
  for (const auto& name : schema.extra_baseline) xb.push_back(need(name));
  const int idc = schema.id_column.empty() ? -1 : need(schema.id_column);

  const std::string& na = schema.na_token;
  auto num = [&na](const std::string& s) { return s.empty() || s == na ? kNaN : std::stod(s); };
  auto flag = [&na](const std::string& s) {
    return s.empty() || s == na ? int8_t{-1} : static_cast<int8_t>(std::stoi(s));
  };

  const size_t n = t.rows.size();
  ObservedPanel p;
  p.n_waves = T;
  p.absorbing_treatment = schema.absorbing_treatment;
  p.v.resize(n);
  p.extra_baseline_names = schema.extra_baseline;
  p.extra_baseline.assign(schema.extra_baseline.size(), std::vector<double>(n, kNaN));
  if (idc >= 0) p.id.resize(n);
  p.z.assign(T, std::vector<int8_t>(n, -1));
  p.y.assign(T, std::vector<double>(n, kNaN));
  p.s.assign(T, std::vector<int8_t>(n, 0));
  p.r.assign(T, std::vector<int8_t>(n, 0));
  for (size_t i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    try {
      p.v[i] = num(row[vcol]);
      if (idc >= 0) p.id[i] = row[idc];
      for (size_t j = 0; j < xb.size(); ++j) p.extra_baseline[j][i] = num(row[xb[j]]);
      for (int w = 0; w < T; ++w) {
        const int sv = flag(row[sc[w]]);
        p.s[w][i] = static_cast<int8_t>(sv < 0 ? 0 : sv);
        p.z[w][i] = flag(row[zc[w]]);
        p.y[w][i] = num(row[yc[w]]);
        if (rc[w] >= 0) {
          const int rv = flag(row[rc[w]]);
          p.r[w][i] = static_cast<int8_t>(rv < 0 ? 0 : rv);
        } else {
          p.r[w][i] = std::isnan(p.y[w][i]) ? 0 : 1;
        }
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("panel CSV line " + std::to_string(i + 2) + ": " + e.what());
    }
  }
  p.validate();
  return p;
}

}  // namespace strata
