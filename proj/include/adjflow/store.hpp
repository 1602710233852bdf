// Checkpoint persistence for the primal trajectory: written strictly forward
// during integration, read strictly in reverse during the adjoint sweep.
// Fixed-size records give O(1) reverse addressing without an index. The
// binary file format is bit-exact: header {magic "ADJK", version u32, N_u
// u64, s u32, N_t u64, time grid f64[N_t+1]}, then record 0 = u^(0) followed
// per step by k_1..k_s and u^(n), every record N_u little-endian float64.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "adjflow/linalg.hpp"

namespace adjflow {

enum class StoreErrorKind {
  out_of_order,
  io,
  truncated,
  magic_mismatch,
  version_mismatch,
  layout_mismatch,
  grid_mismatch,
  forward_seek,
  endianness,
};

struct StoreError : std::runtime_error {
  StoreError(StoreErrorKind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  StoreErrorKind kind;
};

struct StoreLayout {
  std::uint64_t n_u = 0;
  std::uint32_t stages = 0;
  std::uint64_t n_steps = 0;
  std::vector<double> times;  // N_t + 1 grid points

  std::uint64_t record_count() const { return 1 + n_steps * (stages + 1); }

  // record index of each slot; stage i is 1-based
  std::uint64_t initial_record() const { return 0; }
  std::uint64_t stage_record(int n, int i) const {
    return 1 + static_cast<std::uint64_t>(n - 1) * (stages + 1) + (i - 1);
  }
  std::uint64_t state_record(int n) const {
    return 1 + static_cast<std::uint64_t>(n - 1) * (stages + 1) + stages;
  }

  bool operator==(const StoreLayout& o) const {
    return n_u == o.n_u && stages == o.stages && n_steps == o.n_steps && times == o.times;
  }
};

struct StepBundle {
  Vector u_prev;               // u^(n-1)
  std::vector<Vector> stages;  // k_1 .. k_s
};

class CheckpointWriter {
 public:
  virtual ~CheckpointWriter() = default;
  virtual void write_initial(const Vector& u0) = 0;
  virtual void write_stage(int n, int i, const Vector& k) = 0;
  virtual void write_state(int n, const Vector& u) = 0;
  virtual void finish() = 0;
};

/// Reverse traversal: final_state() first, then read_step(n) for n = N_t..1.
class ReverseReader {
 public:
  virtual ~ReverseReader() = default;
  virtual const StoreLayout& layout() const = 0;
  virtual Vector final_state() = 0;
  virtual StepBundle read_step(int n) = 0;
};

/// Forward traversal (tangent/sensitivity passes re-consuming the same
/// trajectory the adjoint differentiates).
class ForwardReader {
 public:
  virtual ~ForwardReader() = default;
  virtual const StoreLayout& layout() const = 0;
  virtual Vector initial_state() = 0;
  virtual StepBundle read_step_forward(int n) = 0;  // n = 1..N_t; u_prev + stages
  virtual Vector read_state(int n) = 0;             // u^(n) right after its step
};

class CheckpointStore {
 public:
  virtual ~CheckpointStore() = default;
  virtual std::unique_ptr<CheckpointWriter> open_write(const StoreLayout& layout) = 0;
  virtual std::unique_ptr<ReverseReader> open_reverse(const StoreLayout& expected) = 0;
  virtual std::unique_ptr<ForwardReader> open_forward(const StoreLayout& expected) = 0;
};

namespace detail {

// Forward-order slot bookkeeping shared by both writers.
class SlotSequencer {
 public:
  void reset(const StoreLayout& l) {
    layout_ = l;
    next_ = 0;
  }
  std::uint64_t expect(std::uint64_t record, const std::string& slot_name) {
    if (record != next_)
      throw StoreError(StoreErrorKind::out_of_order,
                       "checkpoint slot written out of order: " + slot_name);
    return next_++;
  }
  bool complete() const { return next_ == layout_.record_count(); }

 private:
  StoreLayout layout_;
  std::uint64_t next_ = 0;
};

}  // namespace detail

// --- in-memory --------------------------------------------------------------

class MemoryCheckpointStore final : public CheckpointStore {
 public:
  std::unique_ptr<CheckpointWriter> open_write(const StoreLayout& layout) override;
  std::unique_ptr<ReverseReader> open_reverse(const StoreLayout& expected) override;
  std::unique_ptr<ForwardReader> open_forward(const StoreLayout& expected) override;

  const StoreLayout& layout() const { return layout_; }

 private:
  friend class MemoryWriter;
  StoreLayout layout_;
  std::vector<Vector> records_;
  bool complete_ = false;
};

class MemoryWriter final : public CheckpointWriter {
 public:
  MemoryWriter(MemoryCheckpointStore& s, const StoreLayout& l) : store_(s) {
    seq_.reset(l);
    store_.layout_ = l;
    store_.records_.assign(l.record_count(), Vector());
    store_.complete_ = false;
  }
  void write_initial(const Vector& u0) override { put(store_.layout_.initial_record(), "u(0)", u0); }
  void write_stage(int n, int i, const Vector& k) override {
    put(store_.layout_.stage_record(n, i), "k_" + std::to_string(i) + "(" + std::to_string(n) + ")", k);
  }
  void write_state(int n, const Vector& u) override {
    put(store_.layout_.state_record(n), "u(" + std::to_string(n) + ")", u);
  }
  void finish() override { store_.complete_ = seq_.complete(); }

 private:
  void put(std::uint64_t rec, const std::string& name, const Vector& v) {
    if (v.size() != store_.layout_.n_u)
      throw StoreError(StoreErrorKind::layout_mismatch, "record size mismatch at " + name);
    seq_.expect(rec, name);
    store_.records_[rec] = v;
  }
  MemoryCheckpointStore& store_;
  detail::SlotSequencer seq_;
};

class MemoryReverseReader final : public ReverseReader {
 public:
  MemoryReverseReader(const StoreLayout& layout, const std::vector<Vector>& recs,
                      const StoreLayout& expected, bool complete)
      : layout_(layout), records_(recs) {
    if (!complete) throw StoreError(StoreErrorKind::truncated, "incomplete trajectory");
    if (!(layout_ == expected))
      throw StoreError(StoreErrorKind::grid_mismatch,
                       "stored trajectory does not match the requesting run");
    last_record_ = layout_.record_count();
  }

  const StoreLayout& layout() const override { return layout_; }

  Vector final_state() override {
    return fetch(layout_.state_record(static_cast<int>(layout_.n_steps)));
  }

  StepBundle read_step(int n) override {
    StepBundle b;
    b.stages.resize(layout_.stages);
    for (int i = static_cast<int>(layout_.stages); i >= 1; --i)
      b.stages[i - 1] = fetch(layout_.stage_record(n, i));
    b.u_prev = fetch(n == 1 ? layout_.initial_record() : layout_.state_record(n - 1));
    return b;
  }

 private:
  Vector fetch(std::uint64_t rec) {
    if (rec >= last_record_)
      throw StoreError(StoreErrorKind::forward_seek, "reverse reader moved forward");
    last_record_ = rec;
    return records_[rec];
  }
  const StoreLayout& layout_;
  const std::vector<Vector>& records_;
  std::uint64_t last_record_;
};

class MemoryForwardReader final : public ForwardReader {
 public:
  MemoryForwardReader(const StoreLayout& layout, const std::vector<Vector>& recs,
                      const StoreLayout& expected, bool complete)
      : layout_(layout), records_(recs) {
    if (!complete) throw StoreError(StoreErrorKind::truncated, "incomplete trajectory");
    if (!(layout_ == expected))
      throw StoreError(StoreErrorKind::grid_mismatch,
                       "stored trajectory does not match the requesting run");
  }
  const StoreLayout& layout() const override { return layout_; }
  Vector initial_state() override { return records_[layout_.initial_record()]; }
  StepBundle read_step_forward(int n) override {
    StepBundle b;
    b.u_prev = records_[n == 1 ? layout_.initial_record() : layout_.state_record(n - 1)];
    b.stages.resize(layout_.stages);
    for (int i = 1; i <= static_cast<int>(layout_.stages); ++i)
      b.stages[i - 1] = records_[layout_.stage_record(n, i)];
    return b;
  }
  Vector read_state(int n) override { return records_[layout_.state_record(n)]; }

 private:
  const StoreLayout& layout_;
  const std::vector<Vector>& records_;
};

inline std::unique_ptr<CheckpointWriter> MemoryCheckpointStore::open_write(const StoreLayout& l) {
  return std::make_unique<MemoryWriter>(*this, l);
}
inline std::unique_ptr<ReverseReader> MemoryCheckpointStore::open_reverse(const StoreLayout& e) {
  return std::make_unique<MemoryReverseReader>(layout_, records_, e, complete_);
}
inline std::unique_ptr<ForwardReader> MemoryCheckpointStore::open_forward(const StoreLayout& e) {
  return std::make_unique<MemoryForwardReader>(layout_, records_, e, complete_);
}

// --- file-backed ------------------------------------------------------------

namespace detail {

constexpr char kMagic[4] = {'A', 'D', 'J', 'K'};
constexpr std::uint32_t kVersion = 1;

inline void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little)
    throw StoreError(StoreErrorKind::endianness, "checkpoint files require a little-endian host");
}

inline std::uint64_t header_bytes(const StoreLayout& l) {
  return 4 + 4 + 8 + 4 + 8 + 8 * (l.n_steps + 1);
}

inline std::uint64_t record_offset(const StoreLayout& l, std::uint64_t record) {
  return header_bytes(l) + record * l.n_u * 8;
}

inline std::uint64_t file_bytes(const StoreLayout& l) {
  return record_offset(l, l.record_count());
}

}  // namespace detail

class FileCheckpointStore final : public CheckpointStore {
 public:
  explicit FileCheckpointStore(std::filesystem::path path) : path_(std::move(path)) {}
  const std::filesystem::path& path() const { return path_; }

  std::unique_ptr<CheckpointWriter> open_write(const StoreLayout& layout) override;
  std::unique_ptr<ReverseReader> open_reverse(const StoreLayout& expected) override;
  std::unique_ptr<ForwardReader> open_forward(const StoreLayout& expected) override;

 private:
  std::filesystem::path path_;
};

class FileWriter final : public CheckpointWriter {
 public:
  FileWriter(const std::filesystem::path& path, const StoreLayout& layout) : layout_(layout) {
    detail::require_little_endian();
    seq_.reset(layout);
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw StoreError(StoreErrorKind::io, "cannot open " + path.string());
    out_.write(detail::kMagic, 4);
    write_pod(detail::kVersion);
    write_pod(layout.n_u);
    write_pod(layout.stages);
    write_pod(layout.n_steps);
    out_.write(reinterpret_cast<const char*>(layout.times.data()),
               static_cast<std::streamsize>(8 * layout.times.size()));
    check("header");
  }

  void write_initial(const Vector& u0) override { put(layout_.initial_record(), "u(0)", u0); }
  void write_stage(int n, int i, const Vector& k) override {
    put(layout_.stage_record(n, i), "k_" + std::to_string(i) + "(" + std::to_string(n) + ")", k);
  }
  void write_state(int n, const Vector& u) override {
    put(layout_.state_record(n), "u(" + std::to_string(n) + ")", u);
  }
  void finish() override {
    out_.flush();
    check("flush");
    out_.close();
  }

 private:
  template <class T>
  void write_pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put(std::uint64_t rec, const std::string& name, const Vector& v) {
    if (v.size() != layout_.n_u)
      throw StoreError(StoreErrorKind::layout_mismatch, "record size mismatch at " + name);
    seq_.expect(rec, name);
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(8 * v.size()));
    check(name);
  }
  void check(const std::string& what) {
    if (!out_) throw StoreError(StoreErrorKind::io, "checkpoint write failed at " + what);
  }

  StoreLayout layout_;
  detail::SlotSequencer seq_;
  std::ofstream out_;
};

namespace detail {

inline StoreLayout read_and_check_header(std::ifstream& in, const std::filesystem::path& path,
                                         const StoreLayout& expected) {
  require_little_endian();
  if (!in) throw StoreError(StoreErrorKind::io, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw StoreError(StoreErrorKind::magic_mismatch, "bad checkpoint magic in " + path.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != kVersion)
    throw StoreError(StoreErrorKind::version_mismatch,
                     "checkpoint version " + std::to_string(version));
  StoreLayout l;
  in.read(reinterpret_cast<char*>(&l.n_u), 8);
  in.read(reinterpret_cast<char*>(&l.stages), 4);
  in.read(reinterpret_cast<char*>(&l.n_steps), 8);
  if (!in) throw StoreError(StoreErrorKind::truncated, "truncated header in " + path.string());
  if (l.n_u != expected.n_u || l.stages != expected.stages || l.n_steps != expected.n_steps)
    throw StoreError(StoreErrorKind::layout_mismatch,
                     "checkpoint layout does not match the requesting run");
  l.times.resize(l.n_steps + 1);
  in.read(reinterpret_cast<char*>(l.times.data()), static_cast<std::streamsize>(8 * l.times.size()));
  if (!in) throw StoreError(StoreErrorKind::truncated, "truncated grid in " + path.string());
  if (l.times != expected.times)
    throw StoreError(StoreErrorKind::grid_mismatch, "checkpoint grid does not match");
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec || size != file_bytes(l))
    throw StoreError(StoreErrorKind::truncated, "checkpoint length mismatch in " + path.string());
  return l;
}

}  // namespace detail

class FileReverseReader final : public ReverseReader {
 public:
  FileReverseReader(const std::filesystem::path& path, const StoreLayout& expected)
      : in_(path, std::ios::binary) {
    layout_ = detail::read_and_check_header(in_, path, expected);
    last_offset_ = detail::file_bytes(layout_);
  }
  const StoreLayout& layout() const override { return layout_; }

  Vector final_state() override {
    return fetch(layout_.state_record(static_cast<int>(layout_.n_steps)));
  }
  StepBundle read_step(int n) override {
    StepBundle b;
    b.stages.resize(layout_.stages);
    for (int i = static_cast<int>(layout_.stages); i >= 1; --i)
      b.stages[i - 1] = fetch(layout_.stage_record(n, i));
    b.u_prev = fetch(n == 1 ? layout_.initial_record() : layout_.state_record(n - 1));
    return b;
  }

 private:
  Vector fetch(std::uint64_t rec) {
    const std::uint64_t off = detail::record_offset(layout_, rec);
    if (off >= last_offset_)
      throw StoreError(StoreErrorKind::forward_seek, "reverse reader moved forward");
    last_offset_ = off;
    in_.seekg(static_cast<std::streamoff>(off));
    Vector v(layout_.n_u);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(8 * v.size()));
    if (!in_) throw StoreError(StoreErrorKind::io, "checkpoint read failed");
    return v;
  }

  std::ifstream in_;
  StoreLayout layout_;
  std::uint64_t last_offset_;
};

class FileForwardReader final : public ForwardReader {
 public:
  FileForwardReader(const std::filesystem::path& path, const StoreLayout& expected)
      : in_(path, std::ios::binary) {
    layout_ = detail::read_and_check_header(in_, path, expected);
  }
  const StoreLayout& layout() const override { return layout_; }
  Vector initial_state() override { return fetch(layout_.initial_record()); }
  StepBundle read_step_forward(int n) override {
    StepBundle b;
    b.u_prev = fetch(n == 1 ? layout_.initial_record() : layout_.state_record(n - 1));
    b.stages.resize(layout_.stages);
    for (int i = 1; i <= static_cast<int>(layout_.stages); ++i)
      b.stages[i - 1] = fetch(layout_.stage_record(n, i));
    return b;
  }
  Vector read_state(int n) override { return fetch(layout_.state_record(n)); }

 private:
  Vector fetch(std::uint64_t rec) {
    in_.seekg(static_cast<std::streamoff>(detail::record_offset(layout_, rec)));
    Vector v(layout_.n_u);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(8 * v.size()));
    if (!in_) throw StoreError(StoreErrorKind::io, "checkpoint read failed");
    return v;
  }
  std::ifstream in_;
  StoreLayout layout_;
};

inline std::unique_ptr<CheckpointWriter> FileCheckpointStore::open_write(const StoreLayout& l) {
  return std::make_unique<FileWriter>(path_, l);
}
inline std::unique_ptr<ReverseReader> FileCheckpointStore::open_reverse(const StoreLayout& e) {
  return std::make_unique<FileReverseReader>(path_, e);
}
inline std::unique_ptr<ForwardReader> FileCheckpointStore::open_forward(const StoreLayout& e) {
  return std::make_unique<FileForwardReader>(path_, e);
}

}  // namespace adjflow
