#pragma once

// Transactional sorted singly linked list keyed by machine words.

#include <cstdint>
#include <vector>

#include "mv/types.hpp"

namespace mv::ds {

// Valid user keys are 1 .. kMaxKey; 0 and UINT64_MAX are sentinels.
inline constexpr uint64_t kMaxKey = UINT64_MAX - 2;

template <class TM>
class SortedList {
public:
    using Tx = typename TM::Tx;
    static constexpr const char* kName = "list";

    explicit SortedList(TM& tm) : tm_(tm), head_(new Node) {}
    ~SortedList() {
        std::vector<Node*> nodes;
        for (Node* n = head_; n != nullptr; n = n->next.unsafeGet()) nodes.push_back(n);
        tm_.reclaimUnsafe(nodes);
    }
    SortedList(const SortedList&) = delete;
    SortedList& operator=(const SortedList&) = delete;

    bool contains(Tx& tx, uint64_t k) {
        auto [prev, cur] = find(tx, k);
        return cur != nullptr && tx.load(cur->key) == k;
    }

    bool insert(Tx& tx, uint64_t k, uint64_t v) {
        auto [prev, cur] = find(tx, k);
        if (cur != nullptr && tx.load(cur->key) == k) return false;
        Node* n = tx.template alloc<Node>();
        n->key.unsafeSet(k);
        n->val.unsafeSet(v);
        n->next.unsafeSet(cur);
        tx.store(prev->next, n);
        return true;
    }

    // Inserts or overwrites; always writes. Returns true when inserted.
    bool upsert(Tx& tx, uint64_t k, uint64_t v) {
        auto [prev, cur] = find(tx, k);
        if (cur != nullptr && tx.load(cur->key) == k) {
            tx.store(cur->val, v);
            return false;
        }
        Node* n = tx.template alloc<Node>();
        n->key.unsafeSet(k);
        n->val.unsafeSet(v);
        n->next.unsafeSet(cur);
        tx.store(prev->next, n);
        return true;
    }

    bool erase(Tx& tx, uint64_t k) {
        auto [prev, cur] = find(tx, k);
        if (cur == nullptr || tx.load(cur->key) != k) return false;
        tx.store(prev->next, tx.load(cur->next));
        tx.retire(cur);
        return true;
    }

    // Keys in [lo, hi); `out` is overwritten when given.
    uint64_t rangeQuery(Tx& tx, uint64_t lo, uint64_t hi, std::vector<uint64_t>* out = nullptr) {
        if (out != nullptr) out->clear();
        auto [prev, cur] = find(tx, lo);
        uint64_t n = 0;
        for (; cur != nullptr; cur = tx.load(cur->next)) {
            const uint64_t k = tx.load(cur->key);
            if (k >= hi) break;
            ++n;
            if (out != nullptr) out->push_back(k);
        }
        return n;
    }

    uint64_t size(Tx& tx) { return rangeQuery(tx, 0, UINT64_MAX); }

    std::vector<uint64_t> keysUnsafe() const {
        std::vector<uint64_t> keys;
        for (Node* n = head_->next.unsafeGet(); n != nullptr; n = n->next.unsafeGet()) {
            keys.push_back(n->key.unsafeGet());
        }
        return keys;
    }

private:
    struct Node {
        TCell<uint64_t> key;
        TCell<uint64_t> val;
        TCell<Node*> next;
    };

    // First node with key >= k and its predecessor.
    std::pair<Node*, Node*> find(Tx& tx, uint64_t k) {
        Node* prev = head_;
        Node* cur = tx.load(prev->next);
        while (cur != nullptr && tx.load(cur->key) < k) {
            prev = cur;
            cur = tx.load(cur->next);
        }
        return {prev, cur};
    }

    TM& tm_;
    Node* head_;
};

}  // namespace mv::ds
