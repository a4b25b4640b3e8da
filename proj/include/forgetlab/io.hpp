#ifndef FORGETLAB_IO_HPP
#define FORGETLAB_IO_HPP

// Text dumps of snapshots and task definitions.
//
// snapshot file:
//   forgetlab-snapshot 1
//   task <index>            (-1 for the initial state)
//   layers <d>
//   layer <rows> <cols>     followed by <rows> lines of <cols> numbers
//   probes <count> <m>
//   probe <task> <fixed>    followed by one line of <m> numbers
//
// tasks file:
//   forgetlab-tasks 1
//   tasks <count> <n_features> <outputs>
//   task <index>
//   active <n 0/1 flags>
//   beta                    followed by <outputs> lines of <n> numbers
//
// Numbers are written with 17 significant digits so a dump round-trips
// exactly.

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "forgetlab/model.hpp"
#include "forgetlab/tasks.hpp"

namespace forgetlab {

namespace detail {

inline void write_rows(std::ostream& os, const Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
    os << "\n";
  }
}

inline Matrix read_rows(std::istream& is, Index rows, Index cols, const std::string& what) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      if (!(is >> m(r, c))) throw std::runtime_error(what + ": truncated matrix");
  return m;
}

inline void expect_word(std::istream& is, const std::string& word, const std::string& what) {
  std::string w;
  if (!(is >> w) || w != word) throw std::runtime_error(what + ": expected '" + word + "', found '" + w + "'");
}

template <typename T>
T read_value(std::istream& is, const std::string& what) {
  T v;
  if (!(is >> v)) throw std::runtime_error(what + ": malformed header");
  return v;
}

}  // namespace detail

inline void write_snapshot(std::ostream& os, const Snapshot& s) {
  os << std::setprecision(17);
  os << "forgetlab-snapshot 1\n";
  os << "task " << s.task_index() << "\n";
  const auto& layers = s.encoder().layers();
  os << "layers " << layers.size() << "\n";
  for (const Matrix& l : layers) {
    os << "layer " << l.rows() << " " << l.cols() << "\n";
    detail::write_rows(os, l);
  }
  const ProbeBank& bank = s.probes();
  os << "probes " << bank.size() << " " << (bank.size() ? bank[0].w.size() : 0) << "\n";
  for (const Probe& p : bank.probes()) {
    os << "probe " << p.task << " " << (p.fixed ? 1 : 0) << "\n";
    detail::write_rows(os, p.w.transpose());
  }
}

inline Snapshot read_snapshot(std::istream& is, const std::string& what = "snapshot") {
  detail::expect_word(is, "forgetlab-snapshot", what);
  if (detail::read_value<int>(is, what) != 1) throw std::runtime_error(what + ": unsupported version");
  detail::expect_word(is, "task", what);
  const int task = detail::read_value<int>(is, what);
  detail::expect_word(is, "layers", what);
  const auto d = detail::read_value<std::size_t>(is, what);
  std::vector<Matrix> layers;
  for (std::size_t k = 0; k < d; ++k) {
    detail::expect_word(is, "layer", what);
    const auto r = detail::read_value<Index>(is, what);
    const auto c = detail::read_value<Index>(is, what);
    layers.push_back(detail::read_rows(is, r, c, what));
  }
  detail::expect_word(is, "probes", what);
  const auto count = detail::read_value<std::size_t>(is, what);
  const auto m = detail::read_value<Index>(is, what);
  ProbeBank bank;
  for (std::size_t k = 0; k < count; ++k) {
    detail::expect_word(is, "probe", what);
    Probe p;
    p.task = detail::read_value<int>(is, what);
    p.fixed = detail::read_value<int>(is, what) != 0;
    p.w = detail::read_rows(is, 1, m, what).row(0).transpose();
    bank.add(std::move(p));
  }
  return Snapshot(task, Encoder(std::move(layers)), std::move(bank));
}

inline void write_tasks(std::ostream& os, const std::vector<TaskSpec>& tasks) {
  os << std::setprecision(17);
  os << "forgetlab-tasks 1\n";
  const Index n = tasks.empty() ? 0 : tasks[0].features();
  const Index k = tasks.empty() ? 0 : tasks[0].outputs();
  os << "tasks " << tasks.size() << " " << n << " " << k << "\n";
  for (const TaskSpec& t : tasks) {
    os << "task " << t.index << "\nactive";
    for (Index i = 0; i < t.active.size(); ++i) os << " " << (t.active(i) ? 1 : 0);
    os << "\nbeta\n";
    detail::write_rows(os, t.beta);
  }
}

inline std::vector<TaskSpec> read_tasks(std::istream& is, const std::string& what = "tasks") {
  detail::expect_word(is, "forgetlab-tasks", what);
  if (detail::read_value<int>(is, what) != 1) throw std::runtime_error(what + ": unsupported version");
  detail::expect_word(is, "tasks", what);
  const auto count = detail::read_value<std::size_t>(is, what);
  const auto n = detail::read_value<Index>(is, what);
  const auto k = detail::read_value<Index>(is, what);
  std::vector<TaskSpec> tasks;
  for (std::size_t t = 0; t < count; ++t) {
    TaskSpec spec;
    detail::expect_word(is, "task", what);
    spec.index = detail::read_value<int>(is, what);
    detail::expect_word(is, "active", what);
    spec.active = Mask(n);
    for (Index i = 0; i < n; ++i) spec.active(i) = detail::read_value<int>(is, what) != 0;
    detail::expect_word(is, "beta", what);
    spec.beta = detail::read_rows(is, k, n, what);
    tasks.push_back(std::move(spec));
  }
  return tasks;
}

inline void write_snapshot_file(const std::string& path, const Snapshot& s) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  write_snapshot(os, s);
}

inline Snapshot read_snapshot_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_snapshot(is, path);
}

inline void write_tasks_file(const std::string& path, const std::vector<TaskSpec>& tasks) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  write_tasks(os, tasks);
}

inline std::vector<TaskSpec> read_tasks_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_tasks(is, path);
}

}  // namespace forgetlab

#endif  // FORGETLAB_IO_HPP
