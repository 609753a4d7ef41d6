// Copyright 2026 The dgmil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dgmil/common.hpp"

namespace dgmil {

/// Ground-truth instance label. Real MIL data usually has kUnknown
/// everywhere; synthetic data carries the generator's labels.
enum class InstanceLabel : std::uint8_t { kNegative = 0, kPositive = 1, kUnknown = 255 };

/// n x d instance features plus per-instance bag membership.
/// bag_of[i] indexes BagTable::bags (a position, not a bag id).
struct InstanceSet {
  Matrix features;
  std::vector<std::size_t> bag_of;
  std::vector<InstanceLabel> labels;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  bool has_all_labels() const {
    return !labels.empty() &&
           std::none_of(labels.begin(), labels.end(),
                        [](InstanceLabel l) { return l == InstanceLabel::kUnknown; });
  }
};

struct Bag {
  std::uint32_t id = 0;
  std::uint8_t label = 0;
  std::vector<std::size_t> members;  // ascending instance indices
};

struct BagTable {
  std::vector<Bag> bags;

  std::size_t size() const { return bags.size(); }

  std::size_t count_with_label(std::uint8_t label) const {
    return static_cast<std::size_t>(std::count_if(
        bags.begin(), bags.end(), [label](const Bag& b) { return b.label == label; }));
  }

  std::vector<std::uint8_t> labels() const {
    std::vector<std::uint8_t> out;
    out.reserve(bags.size());
    for (const auto& b : bags) out.push_back(b.label);
    return out;
  }
};

/// Bag-label lookup per instance, i.e. the label of the bag each instance belongs to.
inline std::vector<std::uint8_t> instance_bag_labels(const InstanceSet& instances, const BagTable& bags) {
  std::vector<std::uint8_t> out(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) out[i] = bags.bags.at(instances.bag_of[i]).label;
  return out;
}

struct Dataset {
  InstanceSet instances;
  BagTable bags;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// Rebuilds member lists from bag_of, given bag ids and labels in table order.
inline BagTable make_bag_table(const std::vector<std::uint32_t>& ids, const std::vector<std::uint8_t>& labels,
                               const std::vector<std::size_t>& bag_of) {
  require(ids.size() == labels.size(), "bag id and label lists differ in length");
  BagTable table;
  table.bags.resize(ids.size());
  for (std::size_t b = 0; b < ids.size(); ++b) {
    table.bags[b].id = ids[b];
    table.bags[b].label = labels[b];
  }
  for (std::size_t i = 0; i < bag_of.size(); ++i) {
    require(bag_of[i] < table.bags.size(), "instance " + std::to_string(i) + " refers to a missing bag");
    table.bags[bag_of[i]].members.push_back(i);
  }
  return table;
}

enum class ViolationKind {
  kEmptyDataset,
  kRaggedLabels,        // label/bag_of vector lengths disagree with n
  kInvalidBagLabel,
  kDuplicateBagId,
  kEmptyBag,
  kOrphanInstance,      // instance belongs to no bag, or bag_of is out of range
  kMultipleBags,        // instance listed by more than one bag
  kMembershipMismatch,  // bag_of disagrees with the member lists
  kNonFiniteFeature,
  kLabelInconsistent,   // bag label disagrees with known instance labels
};

inline const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kEmptyDataset: return "empty-dataset";
    case ViolationKind::kRaggedLabels: return "ragged-labels";
    case ViolationKind::kInvalidBagLabel: return "invalid-bag-label";
    case ViolationKind::kDuplicateBagId: return "duplicate-bag-id";
    case ViolationKind::kEmptyBag: return "empty-bag";
    case ViolationKind::kOrphanInstance: return "orphan-instance";
    case ViolationKind::kMultipleBags: return "multiple-bags";
    case ViolationKind::kMembershipMismatch: return "membership-mismatch";
    case ViolationKind::kNonFiniteFeature: return "non-finite-feature";
    case ViolationKind::kLabelInconsistent: return "label-inconsistent";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::optional<std::size_t> bag;       // position in BagTable
  std::optional<std::size_t> instance;
  std::string message;
};

/// Collects every invariant violation. An empty result means the dataset is
/// usable by the pipeline.
inline std::vector<Violation> validate_dataset(const InstanceSet& instances, const BagTable& bags) {
  std::vector<Violation> out;
  const std::size_t n = instances.size();
  if (n == 0 || instances.dim() == 0) {
    out.push_back({ViolationKind::kEmptyDataset, std::nullopt, std::nullopt, "dataset needs n >= 1 and d >= 1"});
    return out;
  }
  if (instances.bag_of.size() != n || instances.labels.size() != n) {
    out.push_back({ViolationKind::kRaggedLabels, std::nullopt, std::nullopt,
                   "bag_of/labels length differs from instance count"});
    return out;
  }

  std::map<std::uint32_t, std::size_t> first_with_id;
  for (std::size_t b = 0; b < bags.size(); ++b) {
    const Bag& bag = bags.bags[b];
    if (bag.label > 1) {
      out.push_back({ViolationKind::kInvalidBagLabel, b, std::nullopt,
                     "bag " + std::to_string(bag.id) + " has label " + std::to_string(bag.label)});
    }
    auto [it, inserted] = first_with_id.emplace(bag.id, b);
    if (!inserted) {
      out.push_back({ViolationKind::kDuplicateBagId, b, std::nullopt,
                     "bag id " + std::to_string(bag.id) + " already used by bag at position " +
                         std::to_string(it->second)});
    }
    if (bag.members.empty()) {
      out.push_back({ViolationKind::kEmptyBag, b, std::nullopt, "bag " + std::to_string(bag.id) + " has no instances"});
    }
  }

  std::vector<std::size_t> listed_by(n, 0);
  std::vector<std::size_t> listed_bag(n, 0);
  for (std::size_t b = 0; b < bags.size(); ++b) {
    for (std::size_t i : bags.bags[b].members) {
      if (i >= n) continue;  // reported via the orphan path of the bag_of check below
      ++listed_by[i];
      listed_bag[i] = b;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t owner = instances.bag_of[i];
    if (owner >= bags.size() || listed_by[i] == 0) {
      out.push_back({ViolationKind::kOrphanInstance, std::nullopt, i,
                     "instance " + std::to_string(i) + " belongs to no bag"});
    } else if (listed_by[i] > 1) {
      out.push_back({ViolationKind::kMultipleBags, std::nullopt, i,
                     "instance " + std::to_string(i) + " is listed by " + std::to_string(listed_by[i]) + " bags"});
    } else if (listed_bag[i] != owner) {
      out.push_back({ViolationKind::kMembershipMismatch, owner, i,
                     "instance " + std::to_string(i) + " bag_of disagrees with bag member lists"});
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!instances.features.row(static_cast<Eigen::Index>(i)).allFinite()) {
      out.push_back({ViolationKind::kNonFiniteFeature, std::nullopt, i,
                     "instance " + std::to_string(i) + " has a non-finite feature"});
    }
  }

  // Bag label must equal "any instance positive" whenever the labels decide it.
  for (std::size_t b = 0; b < bags.size(); ++b) {
    const Bag& bag = bags.bags[b];
    bool any_positive = false;
    bool any_unknown = false;
    for (std::size_t i : bag.members) {
      if (i >= n) continue;
      any_positive |= instances.labels[i] == InstanceLabel::kPositive;
      any_unknown |= instances.labels[i] == InstanceLabel::kUnknown;
    }
    if (bag.label == 0 && any_positive) {
      out.push_back({ViolationKind::kLabelInconsistent, b, std::nullopt,
                     "negative bag " + std::to_string(bag.id) + " contains a positive instance"});
    } else if (bag.label == 1 && !any_positive && !any_unknown && !bag.members.empty()) {
      out.push_back({ViolationKind::kLabelInconsistent, b, std::nullopt,
                     "positive bag " + std::to_string(bag.id) + " has only negative instances"});
    }
  }
  return out;
}

/// Throws a validation error summarising the first violations, if any.
inline void ensure_valid(const InstanceSet& instances, const BagTable& bags, const std::string& context,
                         ErrorKind kind = ErrorKind::kValidation) {
  const auto report = validate_dataset(instances, bags);
  if (report.empty()) return;
  std::string message = context + ": " + std::to_string(report.size()) + " violation(s)";
  for (std::size_t k = 0; k < std::min<std::size_t>(report.size(), 3); ++k) message += "; " + report[k].message;
  fail(kind, message);
}

}  // namespace dgmil
