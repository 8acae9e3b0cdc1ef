#pragma once

#include <vector>

namespace clbench {

// Restriction of the logit columns a prediction or loss may consider.
// Labels are global class ids, which coincide with logit indices.
class LogitMask {
 public:
  // Sorts and dedupes; empty set -> ProtocolViolation.
  explicit LogitMask(std::vector<int> labels);

  bool contains(int label) const;
  const std::vector<int>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }

  // All labels within [0, class_count); used where a class range is known.
  void require_within(std::size_t class_count, const char* context) const;

  bool is_subset_of(const LogitMask& other) const;

 private:
  std::vector<int> labels_;  // sorted ascending, unique
};

}  // namespace clbench
