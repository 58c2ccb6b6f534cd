#pragma once

#include <cstddef>
#include <cstdint>
#include <future>
#include <list>
#include <memory>
#include <mutex>

#include "avsr/hyperup.hpp"

namespace avsr {

/// LRU cache of precomputed kernel banks keyed by (alpha, beta, H, W, K,
/// MLP parameter version). Published banks are immutable and shared. Lookups
/// for a key that is still being computed wait for that computation instead
/// of starting another one.
class KernelCache {
 public:
  static constexpr std::size_t kDefaultCapacity = 16;

  explicit KernelCache(std::size_t capacity = kDefaultCapacity);

  /// Returns the cached bank or computes it (without autograd) via
  /// predict_kernels, inserting it and evicting the least recently used entry
  /// when full.
  std::shared_ptr<const KernelBank> get_or_compute(HyperMLPImpl& mlp, const ScaleSpec& spec,
                                                   std::int64_t kernel);

  /// Inserts an externally produced bank (e.g. imported from disk).
  void insert(KernelBank bank);

  /// Cached entry for `key`, or nullptr.
  std::shared_ptr<const KernelBank> find(const BankKey& key);

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  std::uint64_t hits() const;
  std::uint64_t misses() const;
  void clear();

 private:
  using BankFuture = std::shared_future<std::shared_ptr<const KernelBank>>;
  struct Entry {
    BankKey key;
    BankFuture bank;
  };

  std::list<Entry>::iterator locate(const BankKey& key);
  void insert_locked(const BankKey& key, BankFuture bank);

  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::list<Entry> entries_;  // front = most recently used
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

}  // namespace avsr
