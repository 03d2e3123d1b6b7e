#pragma once

#include "wb2flow/geometry.hpp"

#include <memory>
#include <string>

namespace wb2flow {

/// Arithmetic expression over x (and y in 2D).
///
///   expr    := term { ('+' | '-') term }
///   term    := unary { ('*' | '/') unary }
///   unary   := ('+' | '-') unary | power
///   power   := primary [ '^' unary ]
///   primary := number | 'x' | 'y' | 'pi' | func '(' expr ')'
///            | func2 '(' expr ',' expr ')' | '(' expr ')'
///   func    := 'sin' | 'cos' | 'exp' | 'log' | 'sqrt' | 'abs'
///   func2   := 'max' | 'min'
class Expression {
public:
    struct Node;

    /// Throws std::invalid_argument with the offending position on a syntax error.
    static Expression parse(const std::string& text, int dim);

    double operator()(const Point& p) const;
    Point gradient(const Point& p) const;
    const std::string& text() const { return text_; }

private:
    std::shared_ptr<const Node> root_;
    std::string text_;
    int dim_ = 1;
};

}  // namespace wb2flow
