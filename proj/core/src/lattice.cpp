#include "streamtts/lattice/lattice.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "streamtts/error.hpp"

namespace streamtts::lattice {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

LatticeLogProbs::LatticeLogProbs(std::size_t horizontal, std::size_t target_length, double fill)
    : emit({horizontal + 1, target_length}, fill),
      wait({horizontal + 1, target_length + 1}, fill) {}

void validate(const LatticeLogProbs& lp) {
  if (lp.wait.rank() != 2 || lp.wait.rows() == 0 || lp.wait.cols() == 0) {
    throw DimensionError("wait matrix must be [(H+1) x (S+1)], got " +
                         num::shape_string(lp.wait.shape()));
  }
  const std::size_t h = lp.horizontal(), s = lp.target_length();
  if (lp.emit.rows() != h + 1 || lp.emit.cols() != s) {
    throw DimensionError("emit matrix must be [" + std::to_string(h + 1) + "x" +
                         std::to_string(s) + "], got " + num::shape_string(lp.emit.shape()));
  }
  if (h == 0 && s > 0) {
    throw InfeasibleLatticeError("lattice with H=0 and S=" + std::to_string(s) +
                                 " has no legal path");
  }
  for (const Tensor* m : {&lp.emit, &lp.wait}) {
    for (double v : m->values()) {
      if (std::isnan(v) || v > 0.0) {
        throw DimensionError("lattice log-probabilities must be <= 0 and not NaN");
      }
    }
  }
}

std::size_t AlignmentPath::wait_count() const {
  std::size_t n = 0;
  for (Move m : moves) n += m == Move::kWait;
  return n;
}

std::size_t AlignmentPath::emit_count() const { return moves.size() - wait_count(); }

std::string AlignmentPath::str() const {
  std::string out;
  out.reserve(moves.size());
  for (Move m : moves) out += static_cast<char>(m);
  return out;
}

AlignmentPath AlignmentPath::parse(const std::string& text) {
  AlignmentPath p;
  for (char c : text) {
    if (c == 'H') p.moves.push_back(Move::kWait);
    else if (c == 'V') p.moves.push_back(Move::kEmit);
    else if (c == ' ' || c == ',' || c == '\t' || c == '\n') continue;
    else throw FormatError(std::string("invalid path move '") + c + "'");
  }
  return p;
}

std::string ForwardTable::dump_tsv() const {
  std::string out;
  char buf[40];
  for (std::size_t i = 0; i < alpha.rows(); ++i) {
    for (std::size_t j = 0; j < alpha.cols(); ++j) {
      if (j) out += '\t';
      std::snprintf(buf, sizeof buf, "%.17g", alpha(i, j));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

ForwardResult forward_loss(const LatticeLogProbs& lp) {
  validate(lp);
  const std::size_t h = lp.horizontal(), s = lp.target_length();
  ForwardResult r;
  Tensor& alpha = r.table.alpha;
  alpha = Tensor({h + 1, s + 1}, kNegInf);
  alpha(0, 0) = 0.0;
  for (std::size_t i = 0; i <= h; ++i) {
    for (std::size_t j = 0; j <= s; ++j) {
      if (i == 0 && j == 0) continue;
      double v = kNegInf;
      if (i > 0) v = alpha(i - 1, j) + lp.wait(i - 1, j);
      if (j > 0) v = log_add(v, alpha(i, j - 1) + lp.emit(i, j - 1));
      alpha(i, j) = v;
    }
  }
  const double log_total = alpha(h, s);
  if (log_total == kNegInf) {
    throw InfeasibleLatticeError("every path through the lattice has zero probability");
  }
  r.loss = -log_total;
  return r;
}

Tensor backward_table(const LatticeLogProbs& lp) {
  validate(lp);
  const std::size_t h = lp.horizontal(), s = lp.target_length();
  Tensor beta({h + 1, s + 1}, kNegInf);
  beta(h, s) = 0.0;
  for (std::size_t i = h + 1; i-- > 0;) {
    for (std::size_t j = s + 1; j-- > 0;) {
      if (i == h && j == s) continue;
      double v = kNegInf;
      if (i < h) v = lp.wait(i, j) + beta(i + 1, j);
      if (j < s) v = log_add(v, lp.emit(i, j) + beta(i, j + 1));
      beta(i, j) = v;
    }
  }
  return beta;
}

LatticeGradients lattice_gradients(const LatticeLogProbs& lp) {
  const ForwardResult fwd = forward_loss(lp);
  const Tensor beta = backward_table(lp);
  const Tensor& alpha = fwd.table.alpha;
  const std::size_t h = lp.horizontal(), s = lp.target_length();
  const double log_total = -fwd.loss;
  LatticeGradients g;
  g.loss = fwd.loss;
  g.d_emit = Tensor(lp.emit.shape(), 0.0);
  g.d_wait = Tensor(lp.wait.shape(), 0.0);
  for (std::size_t i = 0; i <= h; ++i) {
    for (std::size_t j = 0; j <= s; ++j) {
      if (j < s) {
        const double occ = alpha(i, j) + lp.emit(i, j) + beta(i, j + 1) - log_total;
        g.d_emit(i, j) = occ == kNegInf ? 0.0 : -std::exp(occ);
      }
      if (i < h) {
        const double occ = alpha(i, j) + lp.wait(i, j) + beta(i + 1, j) - log_total;
        g.d_wait(i, j) = occ == kNegInf ? 0.0 : -std::exp(occ);
      }
    }
  }
  return g;
}

double path_log_prob(const LatticeLogProbs& lp, std::span<const Move> moves) {
  const std::size_t h = lp.horizontal(), s = lp.target_length();
  std::size_t i = 0, j = 0;
  double lpv = 0.0;
  for (Move m : moves) {
    if (m == Move::kWait) {
      if (i >= h) throw AlignmentError("path leaves the lattice horizontally");
      lpv += lp.wait(i, j);
      ++i;
    } else {
      if (j >= s) throw AlignmentError("path leaves the lattice vertically");
      lpv += lp.emit(i, j);
      ++j;
    }
  }
  if (i != h || j != s) throw AlignmentError("path does not end at the final node");
  return lpv;
}

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return std::round(r);
}

std::vector<AlignmentPath> enumerate_paths(const LatticeLogProbs& lp, std::size_t max_moves) {
  validate(lp);
  const std::size_t h = lp.horizontal(), s = lp.target_length();
  if (h + s > max_moves) {
    const double count = binomial(h + s, s);
    throw SizeGuardError("refusing to enumerate C(" + std::to_string(h + s) + "," +
                             std::to_string(s) + ") = " + std::to_string(count) +
                             " paths (H+S limit " + std::to_string(max_moves) + ")",
                         count);
  }
  std::vector<AlignmentPath> out;
  AlignmentPath current;
  current.moves.reserve(h + s);
  // Depth-first with running log-probability; H is explored before V.
  auto rec = [&](auto&& self, std::size_t i, std::size_t j, double acc) -> void {
    if (i == h && j == s) {
      current.log_prob = acc;
      out.push_back(current);
      return;
    }
    if (i < h) {
      current.moves.push_back(Move::kWait);
      self(self, i + 1, j, acc + lp.wait(i, j));
      current.moves.pop_back();
    }
    if (j < s) {
      current.moves.push_back(Move::kEmit);
      self(self, i, j + 1, acc + lp.emit(i, j));
      current.moves.pop_back();
    }
  };
  rec(rec, 0, 0, 0.0);
  return out;
}

DurationAlignedText path_to_duration_text(const AlignmentPath& path,
                                          std::span<const TokenId> text) {
  if (path.wait_count() != text.size()) {
    throw AlignmentError("path has " + std::to_string(path.wait_count()) +
                         " horizontal moves but text has " + std::to_string(text.size()) +
                         " tokens");
  }
  DurationAlignedText out;
  out.tokens.reserve(path.emit_count());
  std::size_t cursor = 0;
  for (Move m : path.moves) {
    if (m == Move::kWait) {
      ++cursor;
    } else {
      if (cursor >= text.size()) {
        throw AlignmentError("vertical move after the final text position");
      }
      out.tokens.push_back(text[cursor]);
    }
  }
  return out;
}

}  // namespace streamtts::lattice
