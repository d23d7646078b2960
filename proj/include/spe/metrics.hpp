// Copyright (c) 2026 The spe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPE_METRICS_HPP_
#define SPE_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spe/common.hpp"

namespace spe {

struct Trial {
  bool is_target = false;
  std::string enroll_id;
  std::string test_id;
};

struct LabeledScore {
  bool is_target = false;
  double score = 0;
};

inline double cosine_score(const std::vector<double>& a,
                           const std::vector<double>& b) {
  SPE_CHECK(a.size() == b.size(), "cosine_score: dimension mismatch "
                                      << a.size() << " vs " << b.size());
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  SPE_CHECK(na > 0 && nb > 0, "cosine_score: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// One point on the detection tradeoff curve, taken at threshold theta
// with the accept rule score >= theta:
//   FAR(theta) = P(score >= theta | nontarget)
//   FRR(theta) = P(score <  theta | target)
struct RocPoint {
  double threshold;
  double far;
  double frr;
};

namespace metricdetail {

inline void split_scores(const std::vector<LabeledScore>& scores,
                         std::vector<double>* targets,
                         std::vector<double>* nontargets) {
  for (const auto& s : scores) {
    SPE_CHECK(std::isfinite(s.score), "metrics: non-finite score");
    (s.is_target ? targets : nontargets)->push_back(s.score);
  }
  SPE_CHECK(!targets->empty() && !nontargets->empty(),
            "metrics: need at least one target and one nontarget trial, got "
                << targets->size() << " targets / " << nontargets->size()
                << " nontargets");
}

// Operating points swept over every distinct score, in ascending
// threshold order, plus a reject-all sentinel above the top score. Ties
// are grouped at a single threshold.
inline std::vector<RocPoint> roc_points(const std::vector<LabeledScore>& scores) {
  std::vector<double> targets, nontargets;
  split_scores(scores, &targets, &nontargets);
  std::sort(targets.begin(), targets.end());
  std::sort(nontargets.begin(), nontargets.end());

  std::vector<double> thresholds;
  thresholds.reserve(scores.size() + 1);
  for (const auto& s : scores) thresholds.push_back(s.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  thresholds.push_back(thresholds.back() + 1.0);  // reject-all

  const double nt = static_cast<double>(targets.size());
  const double nn = static_cast<double>(nontargets.size());
  std::vector<RocPoint> points;
  points.reserve(thresholds.size());
  for (double th : thresholds) {
    auto t_below =
        std::lower_bound(targets.begin(), targets.end(), th) - targets.begin();
    auto n_at_or_above =
        nontargets.end() -
        std::lower_bound(nontargets.begin(), nontargets.end(), th);
    points.push_back({th, static_cast<double>(n_at_or_above) / nn,
                      static_cast<double>(t_below) / nt});
  }
  return points;
}

}  // namespace metricdetail

struct EerResult {
  double eer = 0;
  double threshold = 0;
};

// Equal error rate: the crossing of FAR and FRR along the threshold
// sweep, linearly interpolated between the two adjacent operating points
// when the crossing falls between them.
inline EerResult compute_eer(const std::vector<LabeledScore>& scores) {
  auto points = metricdetail::roc_points(scores);
  // FAR decreases and FRR increases with the threshold, so the first
  // point with FRR >= FAR brackets the crossing.
  size_t i = 0;
  while (i < points.size() && points[i].frr < points[i].far) ++i;
  SPE_CHECK(i < points.size(), "compute_eer: no crossing found");
  if (i == 0 || points[i].frr == points[i].far)
    return {points[i].far == points[i].frr
                ? points[i].far
                : 0.5 * (points[i].far + points[i].frr),
            points[i].threshold};

  const RocPoint& lo = points[i - 1];
  const RocPoint& hi = points[i];
  double denom = (hi.frr - lo.frr) - (hi.far - lo.far);
  if (denom == 0)
    return {0.5 * (lo.far + lo.frr), lo.threshold};
  double t = (lo.far - lo.frr) / denom;
  return {lo.far + t * (hi.far - lo.far),
          lo.threshold + t * (hi.threshold - lo.threshold)};
}

struct DcfResult {
  double min_dcf = 0;
  double threshold = 0;
};

// Minimum normalized detection cost:
//   min over thresholds of (c_miss p FRR + c_fa (1-p) FAR)
// divided by min(c_miss p, c_fa (1-p)). The sweep includes the accept-all
// and reject-all endpoints, so the result never exceeds 1.
inline DcfResult compute_min_dcf(const std::vector<LabeledScore>& scores,
                                 double p_target, double c_miss = 1.0,
                                 double c_fa = 1.0) {
  SPE_CHECK(p_target > 0 && p_target < 1,
            "compute_min_dcf: p_target " << p_target << " outside (0,1)");
  SPE_CHECK(c_miss > 0 && c_fa > 0, "compute_min_dcf: costs must be positive");
  auto points = metricdetail::roc_points(scores);
  // accept-all endpoint (threshold below every score)
  points.insert(points.begin(),
                {points.front().threshold - 1.0, 1.0, 0.0});

  double norm = std::min(c_miss * p_target, c_fa * (1.0 - p_target));
  DcfResult best{std::numeric_limits<double>::infinity(), 0};
  for (const auto& pt : points) {
    double cost =
        c_miss * p_target * pt.frr + c_fa * (1.0 - p_target) * pt.far;
    if (cost < best.min_dcf) best = {cost, pt.threshold};
  }
  best.min_dcf /= norm;
  return best;
}

}  // namespace spe

#endif  // SPE_METRICS_HPP_
