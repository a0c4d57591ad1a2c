#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sealpose/autodiff.hpp"
#include "sealpose/random.hpp"
#include "sealpose/types.hpp"

namespace sealpose {

/// Named, shaped parameter tensors for one network. Entry order is the
/// insertion order and is part of the checkpoint format.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
  };

  ParamStore() = default;
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  /// Adds a zero-initialized tensor. Names must be unique.
  Matrix& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  /// Adds a tensor drawn uniformly from [-bound, bound].
  Matrix& add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols, double bound,
                      Rng& rng);

  bool contains(const std::string& name) const { return index_.contains(name); }
  const Matrix& get(const std::string& name) const;
  Matrix& get(const std::string& name);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  /// Total scalar count across all tensors.
  std::size_t total_size() const;
  std::uint64_t seed() const { return seed_; }

  /// Entries whose names start with `prefix`, in store order.
  ParamStore subset(const std::string& prefix) const;

  bool operator==(const ParamStore& other) const;

  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

  /// Byte-level serialization used by save/load.
  std::string serialize() const;
  static ParamStore deserialize(const std::string& bytes, const std::string& origin = "<memory>");

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t seed_ = 0;
};

/// Tape leaves for every entry of a store, looked up by name.
class ParamBinding {
 public:
  /// Trainable bindings register named parameters (gradients reported);
  /// frozen bindings insert constants so no gradient work is done.
  ParamBinding(ad::Tape& tape, const ParamStore& store, bool trainable);

  ad::Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.contains(name); }
  ad::Tape& tape() const { return *tape_; }

 private:
  ad::Tape* tape_;
  std::map<std::string, ad::Var> vars_;
};

}  // namespace sealpose
