#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tagsr/rng.hpp"

/// Tree adjoining grammar for MIMO polynomial NARMAX model structures.
///
/// A model structure is built from elementary trees: one initial tree (the
/// start sentence `Y(k) = Xi(k)`) plus auxiliary trees adjoined onto it. The
/// genotype manipulated by the GP is the derivation tree, an ordered record
/// of which elementary tree was attached at which node of which earlier
/// instance. The derived tree is the expanded syntax tree that the
/// interpreter turns into a polynomial model.
///
/// Elementary trees (node addresses are preorder indices):
///
///   alpha1      expr0 -> Xi                              start sentence
///   beta1       expr0 -> expr0* + expr1(par(C))           new additive term
///   beta2       expr1 -> expr1* x expr2(L_Y Y)            multiply by L_Y Y(k-1)
///   beta3       expr1 -> expr1* x expr2(L_Xi Xi)          multiply by L_Xi Xi(k-1)
///   beta4       expr1 -> expr1* x expr2(L_U U)            multiply by L_U U(k)
///   beta5       expr2 -> x expr2*                         repeat factor (power + 1)
///   beta6       expr2 -> q^-1 expr2*                      delay a noise factor
///   beta7       expr2 -> q^-1 expr2*                      delay an input/output factor
///   beta8       expr2 -> op expr2*                        wrap factor, op substituted
///   alpha2..6   op -> sin | cos | abs | inv | exp
namespace tagsr {

enum class Label : std::uint8_t {
    // nonterminals
    Expr0,
    Expr1,
    Expr2,
    Op,
    Par,
    // terminals
    U,
    Y,
    Xi,
    Plus,
    Coeff,
    Times,
    Shift,
    LinkU,
    LinkY,
    LinkXi,
    NlSin,
    NlCos,
    NlAbs,
    NlInv,
    NlExp,
};

bool is_nonterminal(Label label);
std::string_view label_name(Label label);

enum class TreeId : std::uint8_t {
    Beta1,
    Beta2,
    Beta3,
    Beta4,
    Beta5,
    Beta6,
    Beta7,
    Beta8,
    Alpha1,
    Alpha2,
    Alpha3,
    Alpha4,
    Alpha5,
    Alpha6,
};

inline constexpr int tree_count = 14;

std::string_view tree_name(TreeId id);
std::optional<TreeId> parse_tree_id(std::string_view name);

enum class TreeClass : std::uint8_t { Initial, Auxiliary };

enum class Signal : std::uint8_t { U, Y, Xi };

enum class NonlinearOp : std::uint8_t { Sin, Cos, Abs, Inv, Exp };

std::string_view op_name(NonlinearOp op);
std::optional<NonlinearOp> parse_op(std::string_view name);
TreeId selector_tree(NonlinearOp op);
std::optional<NonlinearOp> selector_op(TreeId id);

struct ElementaryNode {
    Label label;
    int parent = -1;
    std::vector<int> children;
};

struct ElementaryTree {
    TreeId id;
    TreeClass kind;
    std::vector<ElementaryNode> nodes; // nodes[0] is the root, addresses are preorder
    int foot = -1;                     // auxiliary trees only
    std::vector<int> adjunction_sites;
    int substitution_site = -1;

    Label root_label() const { return nodes.front().label; }
};

/// The fixed table of elementary trees.
const ElementaryTree& elementary_tree(TreeId id);

/// Signal introduced by a factor tree (beta2/beta3/beta4), if any.
std::optional<Signal> factor_signal(TreeId id);

struct ChannelCounts {
    int inputs = 1;  // r_u
    int outputs = 1; // r_y
    int noise = 1;   // r_xi

    int of(Signal s) const;
    bool operator==(const ChannelCounts&) const = default;
};

struct GrammarLimits {
    int max_delay = 10;
    int max_complexity = 150;
};

struct Grammar {
    std::string name;
    std::vector<TreeId> initial_trees;
    std::vector<TreeId> auxiliary_trees;
    std::vector<NonlinearOp> nonlinear_ops;
    ChannelCounts channels;
    GrammarLimits limits;

    bool contains(TreeId id) const;
    /// All tree ids, auxiliary first then initial, each in enum order.
    std::vector<TreeId> tree_ids() const;
};

/// Builds one of the named sub-model grammars (IP, LTI, NARX, NARMAX,
/// extNARX, expNARX) or, for "custom", the grammar over `custom_trees`.
/// Selector trees alpha2..alpha6 follow `nonlinear_ops`.
Grammar build_grammar(std::string_view name,
                      ChannelCounts channels,
                      std::vector<NonlinearOp> nonlinear_ops,
                      GrammarLimits limits = {},
                      std::vector<TreeId> custom_trees = {});

/// Non-zero 0/1 channel selector.
struct LinkingArray {
    std::vector<std::uint8_t> bits;

    bool valid() const;
    int size() const { return static_cast<int>(bits.size()); }
    bool operator==(const LinkingArray&) const = default;
    auto operator<=>(const LinkingArray&) const = default;
};

enum class OperationKind : std::uint8_t { Root, Adjoin, Substitute };

struct Operation {
    TreeId tree;
    OperationKind kind = OperationKind::Adjoin;
    int parent = -1;  // index of the instance this one attaches to
    int address = -1; // node address inside that instance's elementary tree
    LinkingArray link; // factor trees only

    bool operator==(const Operation&) const = default;
};

/// Node of an elementary-tree instance inside a derivation tree.
struct Site {
    int op = 0;
    int address = 0;
    bool operator==(const Site&) const = default;
};

/// The genotype. ops[0] is the root initial-tree instance; every other
/// operation references an earlier one.
struct DerivationTree {
    std::vector<Operation> ops;

    int complexity() const;
    bool operator==(const DerivationTree&) const = default;
};

struct AdjoinPayload {
    LinkingArray link;              // required for beta2/beta3/beta4
    std::optional<NonlinearOp> op;  // required for beta8
};

DerivationTree make_root(const Grammar& g);

/// Appends an adjunction of `tree` at `site`. beta8 also appends the
/// substitution of the selector tree for `payload.op`. Throws GrammarError on
/// label mismatch, occupied or ineligible site, or when the complexity cap
/// would be exceeded. The input is not modified.
DerivationTree adjoin(const DerivationTree& dt,
                      const Grammar& g,
                      TreeId tree,
                      Site site,
                      const AdjoinPayload& payload = {});

/// Sites where `tree` may currently be adjoined (label, occupancy, grammar
/// and factor-chain constraints; the complexity cap is not considered).
std::vector<Site> eligible_sites(const DerivationTree& dt, const Grammar& g, TreeId tree);

struct Move {
    TreeId tree;
    Site site;
};

/// Every (auxiliary tree, site) pair of g that is currently legal.
std::vector<Move> legal_moves(const DerivationTree& dt, const Grammar& g);

/// Samples the payload an adjunction of `tree` needs.
AdjoinPayload sample_payload(TreeId tree, const Grammar& g, Rng& rng);

LinkingArray sample_linking_array(int channels, Rng& rng);

/// Random tree with complexity drawn uniformly from [0, max_complexity]
/// (clamped to the grammar cap), each step choosing uniformly among legal
/// (tree, site) pairs.
DerivationTree random_derivation(const Grammar& g, int max_complexity, Rng& rng);

/// All invariant violations of dt under g (empty means valid).
std::vector<std::string> validate(const DerivationTree& dt, const Grammar& g);

/// Indices of ops in the subtree rooted at `op` (ascending, includes `op`).
std::vector<int> subtree_indices(const DerivationTree& dt, int op);

/// Copy of dt without the subtree rooted at `op` (op > 0).
DerivationTree remove_subtree(const DerivationTree& dt, int op);

/// Attaches the subtree of `donor` rooted at `donor_op` onto `site` of
/// `host`; returns the combined tree without checking validity.
DerivationTree graft(const DerivationTree& host, Site site, const DerivationTree& donor, int donor_op);

/// Expanded syntax tree.
struct DerivedNode {
    Label label;
    std::vector<int> children;
    LinkingArray link; // set on LinkU / LinkY / LinkXi leaves
};

struct DerivedTree {
    std::vector<DerivedNode> nodes; // nodes[0] is the root

    bool operator==(const DerivedTree& other) const;
    /// Bracketed rendering, mostly for debugging and tests.
    std::string to_string() const;
};

DerivedTree derive(const DerivationTree& dt);

} // namespace tagsr
