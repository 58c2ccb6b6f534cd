#include "avsr/kernel_cache.hpp"

#include "avsr/error.hpp"

namespace avsr {

KernelCache::KernelCache(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("kernel cache capacity must be positive");
}

std::list<KernelCache::Entry>::iterator KernelCache::locate(const BankKey& key) {
  for (auto it = entries_.begin(); it != entries_.end(); ++it) {
    if (it->key == key) return it;
  }
  return entries_.end();
}

void KernelCache::insert_locked(const BankKey& key, BankFuture bank) {
  if (auto it = locate(key); it != entries_.end()) entries_.erase(it);
  entries_.push_front({key, std::move(bank)});
  while (entries_.size() > capacity_) entries_.pop_back();
}

std::shared_ptr<const KernelBank> KernelCache::get_or_compute(HyperMLPImpl& mlp,
                                                              const ScaleSpec& spec,
                                                              std::int64_t kernel) {
  const BankKey key{spec.alpha(), spec.beta(), spec.in_h(), spec.in_w(), kernel,
                    parameter_version(mlp)};
  std::promise<std::shared_ptr<const KernelBank>> promise;
  {
    std::unique_lock lock(mutex_);
    if (auto it = locate(key); it != entries_.end()) {
      ++hits_;
      entries_.splice(entries_.begin(), entries_, it);
      auto pending = it->bank;
      lock.unlock();
      return pending.get();
    }
    ++misses_;
    insert_locked(key, promise.get_future().share());
  }

  try {
    torch::NoGradGuard no_grad;
    auto bank = std::make_shared<KernelBank>(predict_kernels(mlp, spec, kernel));
    bank->key = key;
    std::shared_ptr<const KernelBank> published = std::move(bank);
    promise.set_value(published);
    return published;
  } catch (...) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = locate(key); it != entries_.end()) entries_.erase(it);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

void KernelCache::insert(KernelBank bank) {
  std::promise<std::shared_ptr<const KernelBank>> ready;
  const auto key = bank.key;
  ready.set_value(std::make_shared<const KernelBank>(std::move(bank)));
  std::lock_guard lock(mutex_);
  insert_locked(key, ready.get_future().share());
}

std::shared_ptr<const KernelBank> KernelCache::find(const BankKey& key) {
  std::unique_lock lock(mutex_);
  auto it = locate(key);
  if (it == entries_.end()) return nullptr;
  auto pending = it->bank;
  lock.unlock();
  return pending.get();
}

std::size_t KernelCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::uint64_t KernelCache::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

std::uint64_t KernelCache::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

void KernelCache::clear() {
  std::lock_guard lock(mutex_);
  entries_.clear();
}

}  // namespace avsr
