#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pdlqr::scan {

// Backend selection for the scan engine. Both compute the same prefixes
// (up to floating-point re-association); Tree uses a balanced recursion
// whose independent combines could run concurrently.
enum class Backend { Sequential, Tree };

namespace detail {

template <typename T, typename Op>
void forward_tree_impl(std::vector<T>& out, std::size_t lo, std::size_t hi, const Op& op) {
  // out[lo..hi) holds the raw elements; on return it holds prefix
  // combinations relative to lo.
  if (hi - lo <= 1) return;
  const std::size_t mid = lo + (hi - lo) / 2;
  forward_tree_impl(out, lo, mid, op);
  forward_tree_impl(out, mid, hi, op);
  const T& left_total = out[mid - 1];
  for (std::size_t i = mid; i < hi; ++i) {
    out[i] = op(left_total, out[i]);
  }
}

template <typename T, typename Op>
void reverse_tree_impl(std::vector<T>& out, std::size_t lo, std::size_t hi, const Op& op) {
  if (hi - lo <= 1) return;
  const std::size_t mid = lo + (hi - lo) / 2;
  reverse_tree_impl(out, lo, mid, op);
  reverse_tree_impl(out, mid, hi, op);
  const T& right_total = out[mid];
  for (std::size_t i = lo; i < mid; ++i) {
    out[i] = op(out[i], right_total);
  }
}

}  // namespace detail

/// Prefix combinations: out[0] = elems[0], out[i] = op(out[i-1], elems[i]).
/// The operator must be associative; it must also be pure (the Tree
/// backend evaluates combines in a balanced order, not left to right).
template <typename T, typename Op>
std::vector<T> forward_scan(std::vector<T> elems, const Op& op,
                            Backend backend = Backend::Tree) {
  if (elems.empty()) {
    throw std::invalid_argument("forward_scan: empty input");
  }
  if (backend == Backend::Sequential) {
    for (std::size_t i = 1; i < elems.size(); ++i) {
      elems[i] = op(elems[i - 1], elems[i]);
    }
  } else {
    detail::forward_tree_impl(elems, 0, elems.size(), op);
  }
  return elems;
}

/// Suffix combinations: out[n-1] = elems[n-1], out[i] = op(elems[i], out[i+1]).
template <typename T, typename Op>
std::vector<T> reverse_scan(std::vector<T> elems, const Op& op,
                            Backend backend = Backend::Tree) {
  if (elems.empty()) {
    throw std::invalid_argument("reverse_scan: empty input");
  }
  if (backend == Backend::Sequential) {
    for (std::size_t i = elems.size() - 1; i-- > 0;) {
      elems[i] = op(elems[i], elems[i + 1]);
    }
  } else {
    detail::reverse_tree_impl(elems, 0, elems.size(), op);
  }
  return elems;
}

}  // namespace pdlqr::scan
