#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nestfit/dataset.hpp"
#include "nestfit/model.hpp"

namespace nestfit {

// Sparse per-(observation, alternative) rows mapping beta slots to covariate
// values. Slots absent from a row contribute zero to that utility.
class DesignMatrix {
 public:
  DesignMatrix() = default;
  DesignMatrix(std::size_t n_obs, std::size_t n_alt, std::size_t n_beta)
      : n_obs_(n_obs), n_alt_(n_alt), n_beta_(n_beta) {
    offsets_.reserve(n_obs * n_alt + 1);
  }

  std::size_t observations() const { return n_obs_; }
  std::size_t alternatives() const { return n_alt_; }
  std::size_t beta_count() const { return n_beta_; }

  struct Entry {
    std::uint32_t slot;
    double value;
  };

  std::span<const Entry> row(std::size_t obs, std::size_t alt) const {
    const std::size_t r = obs * n_alt_ + alt;
    return {entries_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }

  // Rows are appended in (observation, alternative) order.
  void push_entry(std::uint32_t slot, double value) { entries_.push_back({slot, value}); }
  void close_row() { offsets_.push_back(entries_.size()); }

  double utility(std::span<const double> beta, std::size_t obs, std::size_t alt) const {
    double v = 0.0;
    for (const auto& e : row(obs, alt)) v += beta[e.slot] * e.value;
    return v;
  }

  bool operator==(const DesignMatrix& o) const {
    if (n_obs_ != o.n_obs_ || n_alt_ != o.n_alt_ || n_beta_ != o.n_beta_ || offsets_ != o.offsets_ ||
        entries_.size() != o.entries_.size())
      return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].slot != o.entries_[i].slot || entries_[i].value != o.entries_[i].value) return false;
    return true;
  }

 private:
  std::size_t n_obs_ = 0, n_alt_ = 0, n_beta_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<Entry> entries_;
};

inline DesignMatrix build_design(const ModelSpec& spec, const Dataset& data) {
  require_valid(spec);
  const auto layout = parameter_layout(spec);
  const std::size_t n_alt = spec.tree.size();
  std::size_t n_beta = 0;
  for (const auto& s : layout)
    if (s.kind == ParamKind::beta) ++n_beta;

  struct Piece {
    std::uint32_t slot;
    const std::vector<double>* column;  // null for constants
    const std::string* name;
  };
  std::vector<std::vector<Piece>> per_alt(n_alt);
  for (const auto& term : spec.terms) {
    std::uint32_t slot = 0;
    while (layout[slot].name != term.parameter) ++slot;
    const std::vector<double>* col = nullptr;
    if (!term.is_constant()) {
      const auto* c = data.find(term.covariate);
      if (!c) input_error("dataset has no column '" + term.covariate + "' required by term '" + term.parameter + "'");
      if (c->type != ColumnType::numeric)
        input_error("column '" + term.covariate + "' required by term '" + term.parameter + "' is not numeric");
      col = &c->values;
    }
    for (const auto& alt : term.applies_to)
      per_alt[*spec.tree.index_of(alt)].push_back({slot, col, &term.covariate});
  }

  DesignMatrix dm(data.rows(), n_alt, n_beta);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < n_alt; ++j) {
      for (const auto& p : per_alt[j]) {
        const double v = p.column ? (*p.column)[i] : 1.0;
        if (!std::isfinite(v))
          input_error("row " + std::to_string(i) + ": non-finite value in column '" + *p.name + "'");
        dm.push_entry(p.slot, v);
      }
      dm.close_row();
    }
  }
  return dm;
}

}  // namespace nestfit
