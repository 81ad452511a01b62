#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace strata {

// Longitudinal observed records. Wave arrays are indexed 0..n_waves-1 for
// waves t=1..T. Missing codes: z/s/r use -1, y uses NaN. s[t] = alive
// entering wave t+1 (everyone is alive at wave 1). Death is structural:
// s=0 implies y=NaN, z=-1 for that wave onward.
struct ObservedPanel {
  int n_waves = 3;
  bool absorbing_treatment = true;
  std::vector<std::string> id;  // optional; row index used when empty
  std::vector<double> v;
  std::vector<std::string> extra_baseline_names;
  std::vector<std::vector<double>> extra_baseline;  // column-major
  std::vector<std::vector<int8_t>> z;
  std::vector<std::vector<double>> y;
  std::vector<std::vector<int8_t>> s;
  std::vector<std::vector<int8_t>> r;

  size_t size() const { return v.size(); }
  std::string subject_label(size_t i) const;

  // throws with the offending subject named when the observed path violates
  // absorbing death (s=0 then s=1) or absorbing treatment (z 1 then 0)
  void validate() const;

  // wave-2 regime of subject i: 0="00", 1="01", 2="11", -1 dead/unknown
  int regime2(size_t i) const;
  // wave-3 regime: 0="000", 1="001", 2="011", 3="111", -1 dead/unknown
  int regime3(size_t i) const;
};

// Table-1 style wide layout (one potential-outcome slot per column):
//   id,v,z1,y1,y0,s1,s0,z2,y00,y01,y11,s00,s01,s11,z3,y000,y001,y011,y111
// Observed cells carry values, unknown counterfactuals are empty cells,
// structurally missing cells carry the NA token. Counterfactual survival
// cells are emitted only when derivable (monotonicity or absorbing death);
// on import every non-observed survival cell is ignored, so rows violating
// strict monotonicity across regimes are tolerated as-is.
void write_panel_csv(std::ostream& os, const ObservedPanel& p, const std::string& na = "NA");
void write_panel_csv_file(const std::string& path, const ObservedPanel& p,
                          const std::string& na = "NA");
ObservedPanel read_panel_csv(std::istream& is, const std::string& na = "NA");
ObservedPanel read_panel_csv_file(const std::string& path, const std::string& na = "NA");

// generic per-wave column mapping for external files
struct PanelSchema {
  std::string v_column;
  std::vector<std::string> extra_baseline;
  std::vector<std::string> z_columns, y_columns, s_columns, r_columns;  // r optional
  std::string id_column;  // optional
  std::string na_token = "NA";
  bool absorbing_treatment = true;

  static PanelSchema from_json_file(const std::string& path);
};

ObservedPanel read_panel_with_schema(const std::string& csv_path, const PanelSchema& schema);

}  // namespace strata
