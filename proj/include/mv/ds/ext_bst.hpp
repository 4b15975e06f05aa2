#pragma once

// Transactional external (leaf-oriented) binary search tree. Internal nodes
// route: keys below the routing key go left, the rest go right.

#include <cstdint>
#include <vector>

#include "mv/ds/sorted_list.hpp"
#include "mv/types.hpp"

namespace mv::ds {

template <class TM>
class ExtBst {
public:
    using Tx = typename TM::Tx;
    static constexpr const char* kName = "extBst";

    explicit ExtBst(TM& tm) : tm_(tm), root_(new Node) {
        root_->key.unsafeSet(kInf);
        root_->left.unsafeSet(leaf(kInf, 0));
        root_->right.unsafeSet(leaf(kInf, 0));
    }
    ~ExtBst() {
        std::vector<Node*> nodes;
        std::vector<Node*> stack{root_};
        while (!stack.empty()) {
            Node* n = stack.back();
            stack.pop_back();
            nodes.push_back(n);
            if (Node* l = n->left.unsafeGet()) stack.push_back(l);
            if (Node* r = n->right.unsafeGet()) stack.push_back(r);
        }
        tm_.reclaimUnsafe(nodes);
    }
    ExtBst(const ExtBst&) = delete;
    ExtBst& operator=(const ExtBst&) = delete;

    bool contains(Tx& tx, uint64_t k) { return tx.load(search(tx, k).l->key) == k; }

    bool insert(Tx& tx, uint64_t k, uint64_t v) {
        const Path p = search(tx, k);
        const uint64_t lk = tx.load(p.l->key);
        if (lk == k) return false;
        link(tx, p, k, v, lk);
        return true;
    }

    bool upsert(Tx& tx, uint64_t k, uint64_t v) {
        const Path p = search(tx, k);
        const uint64_t lk = tx.load(p.l->key);
        if (lk == k) {
            tx.store(p.l->val, v);
            return false;
        }
        link(tx, p, k, v, lk);
        return true;
    }

    bool erase(Tx& tx, uint64_t k) {
        const Path p = search(tx, k);
        if (tx.load(p.l->key) != k) return false;
        Node* pl = tx.load(p.p->left);
        Node* sibling = pl == p.l ? tx.load(p.p->right) : pl;
        if (tx.load(p.gp->left) == p.p) {
            tx.store(p.gp->left, sibling);
        } else {
            tx.store(p.gp->right, sibling);
        }
        tx.retire(p.l);
        tx.retire(p.p);
        return true;
    }

    uint64_t rangeQuery(Tx& tx, uint64_t lo, uint64_t hi, std::vector<uint64_t>* out = nullptr) {
        if (out != nullptr) out->clear();
        uint64_t n = 0;
        std::vector<Node*> stack{root_};
        while (!stack.empty()) {
            Node* node = stack.back();
            stack.pop_back();
            Node* l = tx.load(node->left);
            const uint64_t k = tx.load(node->key);
            if (l == nullptr) {
                if (k >= lo && k < hi) {
                    ++n;
                    if (out != nullptr) out->push_back(k);
                }
                continue;
            }
            // Push right first so leaves come out in key order.
            if (hi > k) stack.push_back(tx.load(node->right));
            if (lo < k) stack.push_back(l);
        }
        return n;
    }

    uint64_t size(Tx& tx) { return rangeQuery(tx, 0, kInf); }

    std::vector<uint64_t> keysUnsafe() const {
        std::vector<uint64_t> keys;
        std::vector<Node*> stack{root_};
        while (!stack.empty()) {
            Node* n = stack.back();
            stack.pop_back();
            Node* l = n->left.unsafeGet();
            if (l == nullptr) {
                if (n->key.unsafeGet() != kInf) keys.push_back(n->key.unsafeGet());
                continue;
            }
            stack.push_back(n->right.unsafeGet());
            stack.push_back(l);
        }
        return keys;
    }

private:
    static constexpr uint64_t kInf = UINT64_MAX;

    // A node with a null left child is a leaf.
    struct Node {
        TCell<uint64_t> key;
        TCell<uint64_t> val;
        TCell<Node*> left;
        TCell<Node*> right;
    };
    struct Path {
        Node* gp;
        Node* p;
        Node* l;
    };

    static Node* leaf(uint64_t k, uint64_t v) {
        Node* n = new Node;
        n->key.unsafeSet(k);
        n->val.unsafeSet(v);
        return n;
    }

    Path search(Tx& tx, uint64_t k) {
        Path p{nullptr, nullptr, root_};
        for (;;) {
            Node* l = tx.load(p.l->left);
            if (l == nullptr) return p;
            p.gp = p.p;
            p.p = p.l;
            p.l = k < tx.load(p.l->key) ? l : tx.load(p.l->right);
        }
    }

    // Replaces leaf p.l (key lk) by a router over it and a new leaf for k.
    void link(Tx& tx, const Path& p, uint64_t k, uint64_t v, uint64_t lk) {
        Node* nl = tx.template alloc<Node>();
        nl->key.unsafeSet(k);
        nl->val.unsafeSet(v);
        Node* router = tx.template alloc<Node>();
        router->key.unsafeSet(k < lk ? lk : k);
        router->left.unsafeSet(k < lk ? nl : p.l);
        router->right.unsafeSet(k < lk ? p.l : nl);
        if (tx.load(p.p->left) == p.l) {
            tx.store(p.p->left, router);
        } else {
            tx.store(p.p->right, router);
        }
    }

    TM& tm_;
    Node* root_;
};

}  // namespace mv::ds
