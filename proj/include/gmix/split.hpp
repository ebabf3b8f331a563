#pragma once

#include <algorithm>
#include <vector>

#include "gmix/linalg.hpp"

namespace gmix {

/// Partition of {0..d-1} into selected coordinates I (ascending) and the rest J.
class CoordinateSplit {
 public:
  CoordinateSplit() = default;
  CoordinateSplit(Index d, std::vector<Index> selected) : d_(d), sel_(std::move(selected)) {
    std::sort(sel_.begin(), sel_.end());
    if (std::adjacent_find(sel_.begin(), sel_.end()) != sel_.end()) throw ArgError("duplicate selected index");
    if (!sel_.empty() && (sel_.front() < 0 || sel_.back() >= d)) throw ArgError("selected index out of range");
    std::vector<char> mark(static_cast<std::size_t>(d), 0);
    for (Index i : sel_) mark[static_cast<std::size_t>(i)] = 1;
    for (Index i = 0; i < d; ++i)
      if (!mark[static_cast<std::size_t>(i)]) comp_.push_back(i);
  }

  static CoordinateSplit full(Index d) {
    std::vector<Index> all(static_cast<std::size_t>(d));
    for (Index i = 0; i < d; ++i) all[static_cast<std::size_t>(i)] = i;
    return CoordinateSplit(d, std::move(all));
  }

  Index dim() const { return d_; }
  Index rank() const { return static_cast<Index>(sel_.size()); }
  const std::vector<Index>& selected() const { return sel_; }
  const std::vector<Index>& complement() const { return comp_; }

  Vec take_selected(const Vec& v) const { return gather(v, sel_); }
  Vec take_complement(const Vec& v) const { return gather(v, comp_); }

  /// Inverse of the permutation: places (v_I, v_J) back in original order.
  Vec assemble(const Vec& v_sel, const Vec& v_comp) const {
    if (v_sel.size() != rank() || v_comp.size() != d_ - rank()) throw ShapeError("split block sizes do not match");
    Vec out(d_);
    for (std::size_t k = 0; k < sel_.size(); ++k) out(sel_[k]) = v_sel(static_cast<Index>(k));
    for (std::size_t k = 0; k < comp_.size(); ++k) out(comp_[k]) = v_comp(static_cast<Index>(k));
    return out;
  }

 private:
  Index d_ = 0;
  std::vector<Index> sel_;
  std::vector<Index> comp_;
};

}  // namespace gmix
