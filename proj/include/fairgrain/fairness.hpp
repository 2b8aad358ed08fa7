#pragma once

#include <map>
#include <string>
#include <vector>

#include "fairgrain/common.hpp"

namespace fairgrain::fairness {

/// Ordered protected-attribute values, e.g. {"White", "Male"}.
using SubgroupKey = std::vector<std::string>;

struct EvalRecord {
  std::string id;
  int true_label = 0;
  int predicted_label = 0;
  SubgroupKey subgroup;
};

enum class StdMode { Population, Sample };

struct SubgroupReport {
  std::map<SubgroupKey, double> accuracy;  // percent
  std::map<SubgroupKey, double> tpr;       // percent
  double overall_accuracy = 0.0;
  double overall_tpr = 0.0;
  double dob = 0.0;
  double max_min_ratio = 0.0;
  double deo = 0.0;
  double deodds = 0.0;
  SubgroupKey max_accuracy_group, min_accuracy_group;
  SubgroupKey max_tpr_group, min_tpr_group;
  double max_group_accuracy = 0.0, min_group_accuracy = 0.0;
  double max_group_tpr = 0.0, min_group_tpr = 0.0;
  int positive_class = 1;
  /// Metrics that could not be computed (single subgroup, missing outcomes),
  /// with the reason. The report stays usable for what did compute.
  std::vector<std::pair<std::string, std::string>> skipped;
  std::vector<std::string> warnings;
};

/// Percent correct per subgroup. Subgroups with no records cannot occur by
/// construction; an empty record set is an error.
std::map<SubgroupKey, double> subgroup_accuracy(const std::vector<EvalRecord>& records,
                                                double* overall = nullptr);

/// Standard deviation of subgroup accuracies (population by default).
double degree_of_bias(const std::vector<double>& accuracies,
                      StdMode mode = StdMode::Population);

double max_min_ratio(const std::vector<double>& accuracies);

/// Percent of positive-labeled records predicted positive, per subgroup.
/// Subgroups without positives are excluded (warning appended if given).
std::map<SubgroupKey, double> subgroup_tpr(const std::vector<EvalRecord>& records,
                                           int positive_class,
                                           std::vector<std::string>* warnings = nullptr);

/// Absolute TPR gap between two values already expressed in percent.
double deo_from_tprs(double tpr_a, double tpr_b);

/// Equal-opportunity violation: |TPR_A - TPR_B| over exactly two groups.
double deo(const std::vector<EvalRecord>& records, int positive_class);

/// Equalized-odds violation over two groups and a binary outcome:
/// |TPR_A - TPR_B| + |FPR_A - FPR_B|.
double deodds(const std::vector<EvalRecord>& records, int positive_class);

SubgroupReport build_report(const std::vector<EvalRecord>& records, int positive_class,
                            StdMode std_mode = StdMode::Population);

std::string report_to_json(const SubgroupReport& report);
SubgroupReport report_from_json(const std::string& json_text);
std::string report_to_csv(const SubgroupReport& report);

std::string subgroup_name(const SubgroupKey& key);

}  // namespace fairgrain::fairness
