#include "wb2flow/expression.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace wb2flow {

struct Expression::Node {
    enum Kind { Num, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Log, Sqrt, Abs, Max, Min } kind;
    double value = 0.0;
    int var = 0;
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Node::Kind;

struct Dual {
    double v;
    double d[2];
};

NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr)
{
    auto n = std::make_shared<Expression::Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

class Parser {
public:
    Parser(const std::string& s, int dim) : s_(s), dim_(dim) {}

    NodePtr parse()
    {
        NodePtr n = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected character");
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& what) const
    {
        throw std::invalid_argument("expression: " + what + " at position " + std::to_string(pos_) +
                                    " in '" + s_ + "'");
    }

    void skip()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c)
    {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr()
    {
        NodePtr n = term();
        for (;;) {
            if (accept('+')) n = make(Kind::Add, n, term());
            else if (accept('-')) n = make(Kind::Sub, n, term());
            else return n;
        }
    }

    NodePtr term()
    {
        NodePtr n = unary();
        for (;;) {
            if (accept('*')) n = make(Kind::Mul, n, unary());
            else if (accept('/')) n = make(Kind::Div, n, unary());
            else return n;
        }
    }

    NodePtr unary()
    {
        if (accept('-')) return make(Kind::Neg, unary());
        if (accept('+')) return unary();
        return power();
    }

    NodePtr power()
    {
        NodePtr base = primary();
        if (accept('^')) return make(Kind::Pow, base, unary());
        return base;
    }

    NodePtr primary()
    {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        if (accept('(')) {
            NodePtr n = expr();
            if (!accept(')')) fail("expected ')'");
            return n;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("malformed number");
            pos_ += static_cast<size_t>(end - begin);
            auto n = std::make_shared<Expression::Node>();
            n->kind = Kind::Num;
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            const std::string id = s_.substr(start, pos_ - start);
            if (id == "x" || id == "y") {
                const int var = id == "x" ? 0 : 1;
                if (var >= dim_) {
                    pos_ = start;
                    fail("variable '" + id + "' not available in " + std::to_string(dim_) + "D");
                }
                auto n = std::make_shared<Expression::Node>();
                n->kind = Kind::Var;
                n->var = var;
                return n;
            }
            if (id == "pi") {
                auto n = std::make_shared<Expression::Node>();
                n->kind = Kind::Num;
                n->value = M_PI;
                return n;
            }
            Kind k;
            if (id == "sin") k = Kind::Sin;
            else if (id == "cos") k = Kind::Cos;
            else if (id == "exp") k = Kind::Exp;
            else if (id == "log") k = Kind::Log;
            else if (id == "sqrt") k = Kind::Sqrt;
            else if (id == "abs") k = Kind::Abs;
            else if (id == "max") k = Kind::Max;
            else if (id == "min") k = Kind::Min;
            else {
                pos_ = start;
                fail("unknown identifier '" + id + "'");
            }
            if (!accept('(')) fail("expected '(' after " + id);
            NodePtr arg = expr();
            NodePtr second;
            if (k == Kind::Max || k == Kind::Min) {
                if (!accept(',')) fail("expected ',' in " + id);
                second = expr();
            }
            if (!accept(')')) fail("expected ')'");
            return make(k, arg, second);
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    const std::string& s_;
    int dim_;
    size_t pos_ = 0;
};

Dual eval(const Expression::Node& n, const Point& p)
{
    switch (n.kind) {
    case Kind::Num:
        return {n.value, {0.0, 0.0}};
    case Kind::Var: {
        Dual r{p[n.var], {0.0, 0.0}};
        r.d[n.var] = 1.0;
        return r;
    }
    default:
        break;
    }
    const Dual a = eval(*n.a, p);
    Dual r{};
    auto chain = [&](double v, double da) {
        r.v = v;
        r.d[0] = da * a.d[0];
        r.d[1] = da * a.d[1];
        return r;
    };
    switch (n.kind) {
    case Kind::Neg: return chain(-a.v, -1.0);
    case Kind::Sin: return chain(std::sin(a.v), std::cos(a.v));
    case Kind::Cos: return chain(std::cos(a.v), -std::sin(a.v));
    case Kind::Exp: return chain(std::exp(a.v), std::exp(a.v));
    case Kind::Log: return chain(std::log(a.v), 1.0 / a.v);
    case Kind::Sqrt: return chain(std::sqrt(a.v), a.v > 0.0 ? 0.5 / std::sqrt(a.v) : 0.0);
    case Kind::Abs: return chain(std::abs(a.v), a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0));
    default: break;
    }
    const Dual b = eval(*n.b, p);
    if (n.kind == Kind::Max) return a.v >= b.v ? a : b;
    if (n.kind == Kind::Min) return a.v <= b.v ? a : b;
    for (int k = 0; k < 2; ++k) {
        switch (n.kind) {
        case Kind::Add: r.d[k] = a.d[k] + b.d[k]; break;
        case Kind::Sub: r.d[k] = a.d[k] - b.d[k]; break;
        case Kind::Mul: r.d[k] = a.d[k] * b.v + a.v * b.d[k]; break;
        case Kind::Div: r.d[k] = (a.d[k] * b.v - a.v * b.d[k]) / (b.v * b.v); break;
        case Kind::Pow: {
            double d = 0.0;
            if (a.d[k] != 0.0) d += b.v * std::pow(a.v, b.v - 1.0) * a.d[k];
            if (b.d[k] != 0.0) d += std::pow(a.v, b.v) * std::log(a.v) * b.d[k];
            r.d[k] = d;
            break;
        }
        default: break;
        }
    }
    switch (n.kind) {
    case Kind::Add: r.v = a.v + b.v; break;
    case Kind::Sub: r.v = a.v - b.v; break;
    case Kind::Mul: r.v = a.v * b.v; break;
    case Kind::Div: r.v = a.v / b.v; break;
    case Kind::Pow: r.v = std::pow(a.v, b.v); break;
    default: break;
    }
    return r;
}

}  // namespace

Expression Expression::parse(const std::string& text, int dim)
{
    if (dim != 1 && dim != 2) throw std::invalid_argument("expression: dim must be 1 or 2");
    Expression e;
    e.root_ = Parser(text, dim).parse();
    e.text_ = text;
    e.dim_ = dim;
    return e;
}

double Expression::operator()(const Point& p) const
{
    return eval(*root_, p).v;
}

Point Expression::gradient(const Point& p) const
{
    const Dual r = eval(*root_, p);
    Point g(dim_);
    for (int k = 0; k < dim_; ++k) g[k] = r.d[k];
    return g;
}

}  // namespace wb2flow
