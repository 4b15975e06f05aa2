#pragma once

// Transactional closed-addressing hash map with a fixed bucket array and
// unsorted chains. Its long read-only operation is the size query.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <memory>
#include <vector>

#include "mv/types.hpp"

namespace mv::ds {

template <class TM>
class HashMap {
public:
    using Tx = typename TM::Tx;
    static constexpr const char* kName = "hashmap";

    HashMap(TM& tm, std::size_t expectedKeys)
        : tm_(tm),
          mask_(std::bit_ceil(std::max<std::size_t>(expectedKeys, 16)) - 1),
          buckets_(std::make_unique<TCell<Node*>[]>(mask_ + 1)) {}
    explicit HashMap(TM& tm) : HashMap(tm, 1024) {}
    ~HashMap() {
        std::vector<Node*> nodes;
        for (std::size_t b = 0; b <= mask_; ++b) {
            for (Node* n = buckets_[b].unsafeGet(); n != nullptr; n = n->next.unsafeGet()) nodes.push_back(n);
        }
        tm_.reclaimUnsafe(nodes);
        tm_.forgetUnsafe(buckets_.get(), (mask_ + 1) * sizeof(Word));
    }
    HashMap(const HashMap&) = delete;
    HashMap& operator=(const HashMap&) = delete;

    bool contains(Tx& tx, uint64_t k) { return find(tx, bucket(k), k).cur != nullptr; }

    bool insert(Tx& tx, uint64_t k, uint64_t v) {
        TCell<Node*>& b = bucket(k);
        if (find(tx, b, k).cur != nullptr) return false;
        push(tx, b, k, v);
        return true;
    }

    bool upsert(Tx& tx, uint64_t k, uint64_t v) {
        TCell<Node*>& b = bucket(k);
        if (Node* n = find(tx, b, k).cur) {
            tx.store(n->val, v);
            return false;
        }
        push(tx, b, k, v);
        return true;
    }

    bool erase(Tx& tx, uint64_t k) {
        TCell<Node*>& b = bucket(k);
        const Hit h = find(tx, b, k);
        if (h.cur == nullptr) return false;
        tx.store(h.link == nullptr ? b : *h.link, tx.load(h.cur->next));
        tx.retire(h.cur);
        return true;
    }

    // Scans the whole table; keys in [lo, hi) in unspecified order.
    uint64_t rangeQuery(Tx& tx, uint64_t lo, uint64_t hi, std::vector<uint64_t>* out = nullptr) {
        if (out != nullptr) out->clear();
        uint64_t n = 0;
        for (std::size_t i = 0; i <= mask_; ++i) {
            for (Node* cur = tx.load(buckets_[i]); cur != nullptr; cur = tx.load(cur->next)) {
                const uint64_t k = tx.load(cur->key);
                if (k < lo || k >= hi) continue;
                ++n;
                if (out != nullptr) out->push_back(k);
            }
        }
        return n;
    }

    uint64_t size(Tx& tx) {
        uint64_t n = 0;
        for (std::size_t i = 0; i <= mask_; ++i) {
            for (Node* cur = tx.load(buckets_[i]); cur != nullptr; cur = tx.load(cur->next)) ++n;
        }
        return n;
    }

    std::vector<uint64_t> keysUnsafe() const {
        std::vector<uint64_t> keys;
        for (std::size_t b = 0; b <= mask_; ++b) {
            for (Node* n = buckets_[b].unsafeGet(); n != nullptr; n = n->next.unsafeGet()) {
                keys.push_back(n->key.unsafeGet());
            }
        }
        std::sort(keys.begin(), keys.end());
        return keys;
    }

private:
    struct Node {
        TCell<uint64_t> key;
        TCell<uint64_t> val;
        TCell<Node*> next;
    };
    struct Hit {
        TCell<Node*>* link;  // the predecessor's next field, null for the bucket head
        Node* cur;
    };

    TCell<Node*>& bucket(uint64_t k) { return buckets_[(k * 0x9E3779B97F4A7C15ull >> 20) & mask_]; }

    Hit find(Tx& tx, TCell<Node*>& b, uint64_t k) {
        TCell<Node*>* link = nullptr;
        for (Node* cur = tx.load(b); cur != nullptr; cur = tx.load(cur->next)) {
            if (tx.load(cur->key) == k) return {link, cur};
            link = &cur->next;
        }
        return {link, nullptr};
    }

    void push(Tx& tx, TCell<Node*>& b, uint64_t k, uint64_t v) {
        Node* n = tx.template alloc<Node>();
        n->key.unsafeSet(k);
        n->val.unsafeSet(v);
        n->next.unsafeSet(tx.load(b));
        tx.store(b, n);
    }

    TM& tm_;
    std::size_t mask_;
    std::unique_ptr<TCell<Node*>[]> buckets_;
};

}  // namespace mv::ds
