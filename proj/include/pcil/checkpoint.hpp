#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "pcil/errors.hpp"
#include "pcil/head.hpp"
#include "pcil/optim.hpp"
#include "pcil/textio.hpp"

namespace pcil {

// Plain-text checkpoint, one record per line. Doubles are printed in the
// shortest round-trip form and parsed with from_chars, so a save/load cycle
// is bit-exact and the file itself is byte-stable for a given run.
inline constexpr const char* kCheckpointMagic = "pcil-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream& out, const ParamSet& params, const StatsStore& stats,
                            int state) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "state " << state << '\n';
  out << "params " << params.entries().size() << '\n';
  for (const auto& e : params.entries()) {
    const Tensor& t = e.node->data;
    out << "param " << e.name << ' ' << t.shape.size();
    for (std::size_t d : t.shape) out << ' ' << d;
    out << '\n';
    for (std::size_t j = 0; j < t.values.size(); ++j) {
      out << (j ? " " : "") << detail::fmt_double(t.values[j]);
    }
    out << '\n';
  }
  out << "stats.classes " << stats.class_records().size() << '\n';
  for (const auto& [cls, rec] : stats.class_records()) {
    out << cls << ' ' << rec.initial_state << ' ' << detail::fmt_double(rec.psi_init) << '\n';
  }
  out << "stats.current " << stats.current_means().size() << '\n';
  for (const auto& [cls, psi] : stats.current_means()) {
    out << cls << ' ' << detail::fmt_double(psi) << '\n';
  }
  out << "stats.states " << stats.state_means().size() << '\n';
  for (const auto& [st, psi] : stats.state_means()) {
    out << st << ' ' << detail::fmt_double(psi) << '\n';
  }
  out << "end\n";
}

inline void save_checkpoint(const std::string& path, const ParamSet& params,
                            const StatsStore& stats, int state) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  save_checkpoint(out, params, stats, state);
  out.flush();
  if (!out) throw IoError("write failed for " + path);
}

// Restores parameter values and score statistics. The ParamSet must already
// hold every named parameter with a matching shape (i.e. build the model
// first, then load).
inline int load_checkpoint(std::istream& in, ParamSet& params, StatsStore& stats) {
  detail::LineReader r{in};
  std::vector<std::string> tok;

  if (!r.next(tok) || tok.size() != 2 || tok[0] != kCheckpointMagic) {
    r.fail("not a checkpoint file");
  }
  if (detail::parse_long(tok[1], r.line_no) != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + tok[1]);
  }
  if (!r.next(tok) || tok.size() != 2 || tok[0] != "state") r.fail("expected state record");
  const int state = static_cast<int>(detail::parse_long(tok[1], r.line_no));

  if (!r.next(tok) || tok.size() != 2 || tok[0] != "params") r.fail("expected params count");
  const long n_params = detail::parse_long(tok[1], r.line_no);
  for (long p = 0; p < n_params; ++p) {
    if (!r.next(tok) || tok.size() < 3 || tok[0] != "param") r.fail("expected param header");
    const std::string& name = tok[1];
    const long rank = detail::parse_long(tok[2], r.line_no);
    if (rank < 0 || tok.size() != 3 + static_cast<std::size_t>(rank)) {
      r.fail("param header has wrong dimension count");
    }
    Shape shape;
    for (long d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(detail::parse_long(tok[3 + d], r.line_no)));
    }
    if (!params.has(name)) r.fail("unknown parameter '" + name + "'");
    NodePtr node = params.get(name);
    if (node->data.shape != shape) {
      r.fail("shape mismatch for '" + name + "': file has " + shape_str(shape) + ", model has " +
             shape_str(node->data.shape));
    }
    if (!r.next(tok)) r.fail("missing values for '" + name + "'");
    if (tok.size() != node->data.values.size()) {
      r.fail("expected " + std::to_string(node->data.values.size()) + " values for '" + name +
             "', found " + std::to_string(tok.size()));
    }
    for (std::size_t j = 0; j < tok.size(); ++j) {
      node->data.values[j] = detail::parse_double(tok[j], r.line_no);
    }
  }

  if (!r.next(tok) || tok.size() != 2 || tok[0] != "stats.classes") r.fail("expected stats.classes");
  const long n_cls = detail::parse_long(tok[1], r.line_no);
  for (long i = 0; i < n_cls; ++i) {
    if (!r.next(tok) || tok.size() != 3) r.fail("bad class statistics record");
    stats.record_initial(static_cast<int>(detail::parse_long(tok[0], r.line_no)),
                         static_cast<int>(detail::parse_long(tok[1], r.line_no)),
                         detail::parse_double(tok[2], r.line_no));
  }
  if (!r.next(tok) || tok.size() != 2 || tok[0] != "stats.current") r.fail("expected stats.current");
  const long n_cur = detail::parse_long(tok[1], r.line_no);
  for (long i = 0; i < n_cur; ++i) {
    if (!r.next(tok) || tok.size() != 2) r.fail("bad current-mean record");
    stats.set_current(static_cast<int>(detail::parse_long(tok[0], r.line_no)),
                      detail::parse_double(tok[1], r.line_no));
  }
  if (!r.next(tok) || tok.size() != 2 || tok[0] != "stats.states") r.fail("expected stats.states");
  const long n_st = detail::parse_long(tok[1], r.line_no);
  for (long i = 0; i < n_st; ++i) {
    if (!r.next(tok) || tok.size() != 2) r.fail("bad state-mean record");
    stats.record_state_mean(static_cast<int>(detail::parse_long(tok[0], r.line_no)),
                            detail::parse_double(tok[1], r.line_no));
  }
  if (!r.next(tok) || tok.size() != 1 || tok[0] != "end") r.fail("missing end marker");
  return state;
}

inline int load_checkpoint(const std::string& path, ParamSet& params, StatsStore& stats) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return load_checkpoint(in, params, stats);
}

}  // namespace pcil
