#include "tev/parse.hpp"

#include <cctype>
#include <charconv>
#include <set>
#include <string_view>

namespace tev {

namespace {

enum class Tok {
  End,
  Ident,
  KwFunc,
  KwFor,
  KwIn,
  KwReturn,
  KwTensor,
  Int,
  Float,
  LParen,
  RParen,
  LBrace,
  RBrace,
  LBracket,
  RBracket,
  Lt,
  Gt,
  Comma,
  Colon,
  Assign,
  DotDot,
  Minus,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int64_t intVal = 0;
  double floatVal = 0.0;
  SourceSpan span;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skipWhitespaceAndComments();
      Token t = next();
      out.push_back(t);
      if (t.kind == Tok::End) break;
    }
    return out;
  }

 private:
  [[noreturn]] void err(const std::string& msg) const {
    fail(ErrorKind::SyntaxError,
         msg + " (line " + std::to_string(line_) + ", col " + std::to_string(col_) + ")");
  }

  char peek(size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  char advance() {
    char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skipWhitespaceAndComments() {
    for (;;) {
      while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(peek()))) advance();
      if (peek() == '/' && peek(1) == '/') {
        while (pos_ < src_.size() && peek() != '\n') advance();
        continue;
      }
      break;
    }
  }

  Token next() {
    Token t;
    t.span = SourceSpan{line_, col_};
    if (pos_ >= src_.size()) return t;  // End
    char c = peek();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return ident(t);
    if (std::isdigit(static_cast<unsigned char>(c))) return number(t);
    advance();
    switch (c) {
      case '(': t.kind = Tok::LParen; return t;
      case ')': t.kind = Tok::RParen; return t;
      case '{': t.kind = Tok::LBrace; return t;
      case '}': t.kind = Tok::RBrace; return t;
      case '[': t.kind = Tok::LBracket; return t;
      case ']': t.kind = Tok::RBracket; return t;
      case '<': t.kind = Tok::Lt; return t;
      case '>': t.kind = Tok::Gt; return t;
      case ',': t.kind = Tok::Comma; return t;
      case ':': t.kind = Tok::Colon; return t;
      case '=': t.kind = Tok::Assign; return t;
      case '-': t.kind = Tok::Minus; return t;
      case '.':
        if (peek() == '.') {
          advance();
          t.kind = Tok::DotDot;
          return t;
        }
        err("unexpected '.'");
      default:
        err(std::string("unexpected character '") + c + "'");
    }
  }

  Token ident(Token t) {
    std::string s;
    while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') s += advance();
    t.text = s;
    if (s == "func") t.kind = Tok::KwFunc;
    else if (s == "for") t.kind = Tok::KwFor;
    else if (s == "in") t.kind = Tok::KwIn;
    else if (s == "return") t.kind = Tok::KwReturn;
    else if (s == "tensor") t.kind = Tok::KwTensor;
    else t.kind = Tok::Ident;
    return t;
  }

  Token number(Token t) {
    std::string s;
    while (std::isdigit(static_cast<unsigned char>(peek()))) s += advance();
    bool isFloat = false;
    // '..' belongs to the range syntax, not to this number
    if (peek() == '.' && peek(1) != '.') {
      isFloat = true;
      s += advance();
      if (!std::isdigit(static_cast<unsigned char>(peek()))) err("malformed number");
      while (std::isdigit(static_cast<unsigned char>(peek()))) s += advance();
    }
    if (peek() == 'e' || peek() == 'E') {
      isFloat = true;
      s += advance();
      if (peek() == '+' || peek() == '-') s += advance();
      if (!std::isdigit(static_cast<unsigned char>(peek()))) err("malformed exponent");
      while (std::isdigit(static_cast<unsigned char>(peek()))) s += advance();
    }
    t.text = s;
    if (isFloat) {
      t.kind = Tok::Float;
      t.floatVal = std::stod(s);
    } else {
      t.kind = Tok::Int;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), t.intVal);
      if (ec != std::errc()) err("integer literal out of range");
      t.floatVal = static_cast<double>(t.intVal);
    }
    return t;
  }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(Lexer(src).run()) {}

  LoopProgram program() {
    LoopProgram p;
    expect(Tok::KwFunc, "'func'");
    p.name = expect(Tok::Ident, "program name").text;
    expect(Tok::LParen, "'('");
    if (!at(Tok::RParen)) {
      for (;;) {
        p.params.push_back(param());
        if (!consume(Tok::Comma)) break;
      }
    }
    expect(Tok::RParen, "')'");
    expect(Tok::LBrace, "'{'");

    for (const auto& prm : p.params) {
      if (!available_.insert(prm.name).second) {
        fail(ErrorKind::DuplicateParam, "duplicate parameter '" + prm.name + "'" + where(prm.span));
      }
    }
    definedOutsideBody_ = available_;

    while (at(Tok::Ident)) p.preStmts.push_back(outerStmt());

    if (at(Tok::KwFor)) {
      p.loop = loop();
      // the counter is out of scope after the body
      available_.erase(p.loop->counter);
    }

    while (at(Tok::Ident)) p.postStmts.push_back(outerStmt());

    expect(Tok::KwReturn, "'return'");
    for (;;) {
      Token name = expect(Tok::Ident, "return variable");
      if (!available_.count(name.text)) {
        fail(ErrorKind::UnknownIdentifier,
             "return of undefined name '" + name.text + "'" + where(name.span));
      }
      p.returns.push_back(name.text);
      if (!consume(Tok::Comma)) break;
    }
    expect(Tok::RBrace, "'}'");
    expect(Tok::End, "end of input");
    return p;
  }

 private:
  static std::string where(SourceSpan s) {
    return " (line " + std::to_string(s.line) + ", col " + std::to_string(s.col) + ")";
  }

  const Token& cur() const { return toks_[pos_]; }
  bool at(Tok k) const { return cur().kind == k; }

  bool consume(Tok k) {
    if (!at(k)) return false;
    ++pos_;
    return true;
  }

  Token expect(Tok k, const std::string& what) {
    if (!at(k)) {
      fail(ErrorKind::SyntaxError,
           "expected " + what + " but found '" + describe(cur()) + "'" + where(cur().span));
    }
    return toks_[pos_++];
  }

  static std::string describe(const Token& t) {
    switch (t.kind) {
      case Tok::End: return "end of input";
      case Tok::Ident:
      case Tok::Int:
      case Tok::Float: return t.text;
      case Tok::KwFunc: return "func";
      case Tok::KwFor: return "for";
      case Tok::KwIn: return "in";
      case Tok::KwReturn: return "return";
      case Tok::KwTensor: return "tensor";
      case Tok::LParen: return "(";
      case Tok::RParen: return ")";
      case Tok::LBrace: return "{";
      case Tok::RBrace: return "}";
      case Tok::LBracket: return "[";
      case Tok::RBracket: return "]";
      case Tok::Lt: return "<";
      case Tok::Gt: return ">";
      case Tok::Comma: return ",";
      case Tok::Colon: return ":";
      case Tok::Assign: return "=";
      case Tok::DotDot: return "..";
      case Tok::Minus: return "-";
    }
    return "?";
  }

  Param param() {
    Param prm;
    Token name = expect(Tok::Ident, "parameter name");
    prm.name = name.text;
    prm.span = name.span;
    expect(Tok::Colon, "':'");
    expect(Tok::KwTensor, "'tensor'");
    prm.shape = angleShape();
    return prm;
  }

  // "<2,3>" or "<>" (rank 0)
  Shape angleShape() {
    expect(Tok::Lt, "'<'");
    std::vector<int64_t> dims;
    if (!at(Tok::Gt)) {
      for (;;) {
        dims.push_back(expect(Tok::Int, "axis extent").intVal);
        if (!consume(Tok::Comma)) break;
      }
    }
    expect(Tok::Gt, "'>'");
    return Shape{std::move(dims)};
  }

  // "[2, 3]" or "[]" (rank 0)
  Shape bracketShape() {
    expect(Tok::LBracket, "'['");
    std::vector<int64_t> dims;
    if (!at(Tok::RBracket)) {
      for (;;) {
        dims.push_back(expect(Tok::Int, "axis extent").intVal);
        if (!consume(Tok::Comma)) break;
      }
    }
    expect(Tok::RBracket, "']'");
    return Shape{std::move(dims)};
  }

  std::vector<int> permList() {
    expect(Tok::LBracket, "'['");
    std::vector<int> perm;
    for (;;) {
      perm.push_back(static_cast<int>(expect(Tok::Int, "axis index").intVal));
      if (!consume(Tok::Comma)) break;
    }
    expect(Tok::RBracket, "']'");
    return perm;
  }

  int64_t signedInt() {
    bool neg = consume(Tok::Minus);
    int64_t v = expect(Tok::Int, "integer").intVal;
    return neg ? -v : v;
  }

  double signedNumber() {
    bool neg = consume(Tok::Minus);
    if (!at(Tok::Int) && !at(Tok::Float)) expect(Tok::Float, "number");
    double v = toks_[pos_++].floatVal;
    return neg ? -v : v;
  }

  SliceSpec sliceSpec() {
    expect(Tok::LBracket, "'['");
    SliceSpec spec;
    for (;;) {
      SliceSpec::Range r;
      r.start = signedInt();
      expect(Tok::Colon, "':'");
      r.stop = signedInt();
      spec.ranges.push_back(r);
      if (!consume(Tok::Comma)) break;
    }
    expect(Tok::RBracket, "']'");
    return spec;
  }

  ExprPtr expr() {
    SourceSpan span = cur().span;
    if (at(Tok::Minus) || at(Tok::Int) || at(Tok::Float)) {
      return eLit(Tensor::scalar(signedNumber()), span);
    }
    if (at(Tok::KwTensor)) return tensorLiteral();
    Token name = expect(Tok::Ident, "expression");
    if (!at(Tok::LParen)) {
      if (!available_.count(name.text)) {
        fail(ErrorKind::UnknownIdentifier,
             "undefined name '" + name.text + "'" + where(name.span));
      }
      return eVar(name.text, name.span);
    }
    return call(name);
  }

  ExprPtr tensorLiteral() {
    Token kw = expect(Tok::KwTensor, "'tensor'");
    Shape shape = angleShape();
    expect(Tok::LBracket, "'['");
    std::vector<double> data;
    if (!at(Tok::RBracket)) {
      for (;;) {
        data.push_back(signedNumber());
        if (!consume(Tok::Comma)) break;
      }
    }
    expect(Tok::RBracket, "']'");
    if (static_cast<int64_t>(data.size()) != shape.elementCount()) {
      fail(ErrorKind::SyntaxError,
           "tensor literal has " + std::to_string(data.size()) + " elements, shape " +
               shape.str() + " requires " + std::to_string(shape.elementCount()) +
               where(kw.span));
    }
    return eLit(Tensor(std::move(shape), std::move(data)), kw.span);
  }

  ExprPtr call(const Token& name) {
    SourceSpan span = name.span;
    expect(Tok::LParen, "'('");
    const std::string& fn = name.text;
    ExprPtr result;
    if (fn == "add" || fn == "sub" || fn == "mul") {
      BinaryOp op = fn == "add" ? BinaryOp::Add : fn == "sub" ? BinaryOp::Sub : BinaryOp::Mul;
      ExprPtr a = expr();
      expect(Tok::Comma, "','");
      ExprPtr b = expr();
      result = eBinary(op, std::move(a), std::move(b), span);
    } else if (fn == "neg" || fn == "log" || fn == "exp") {
      UnaryOp op = fn == "neg" ? UnaryOp::Neg : fn == "log" ? UnaryOp::Log : UnaryOp::Exp;
      result = eUnary(op, expr(), span);
    } else if (fn == "scale") {
      double factor = signedNumber();
      expect(Tok::Comma, "','");
      result = eScale(factor, expr(), span);
    } else if (fn == "pow") {
      ExprPtr base = expr();
      expect(Tok::Comma, "','");
      result = ePow(std::move(base), expr(), span);
    } else if (fn == "reshape") {
      ExprPtr a = expr();
      expect(Tok::Comma, "','");
      result = eReshape(std::move(a), bracketShape(), span);
    } else if (fn == "transpose") {
      ExprPtr a = expr();
      expect(Tok::Comma, "','");
      result = eTranspose(std::move(a), permList(), span);
    } else if (fn == "slice") {
      ExprPtr a = expr();
      expect(Tok::Comma, "','");
      result = eSlice(std::move(a), sliceSpec(), span);
    } else if (fn == "concat") {
      ExprPtr a = expr();
      expect(Tok::Comma, "','");
      ExprPtr b = expr();
      expect(Tok::Comma, "','");
      int axis = static_cast<int>(signedInt());
      result = eConcat(std::move(a), std::move(b), axis, span);
    } else if (fn == "broadcast") {
      ExprPtr a = expr();
      expect(Tok::Comma, "','");
      result = eBroadcast(std::move(a), bracketShape(), span);
    } else if (fn == "zeros") {
      result = eZeros(bracketShape(), span);
    } else if (fn == "ones") {
      result = eOnes(bracketShape(), span);
    } else {
      fail(ErrorKind::SyntaxError, "unknown function '" + fn + "'" + where(span));
    }
    expect(Tok::RParen, "')'");
    return result;
  }

  Stmt stmt() {
    Token name = expect(Tok::Ident, "variable name");
    expect(Tok::Assign, "'='");
    Stmt s;
    s.name = name.text;
    s.span = name.span;
    s.value = expr();
    return s;
  }

  // pre/post-loop statement: single assignment per name
  Stmt outerStmt() {
    Stmt s = stmt();
    if (!definedOutsideBody_.insert(s.name).second || bodyAssigned_.count(s.name)) {
      fail(ErrorKind::SyntaxError,
           "'" + s.name + "' is reassigned outside the loop body" + where(s.span));
    }
    available_.insert(s.name);
    return s;
  }

  Loop loop() {
    Loop l;
    l.span = cur().span;
    expect(Tok::KwFor, "'for'");
    Token counter = expect(Tok::Ident, "loop counter");
    l.counter = counter.text;
    if (available_.count(l.counter)) {
      fail(ErrorKind::SyntaxError,
           "loop counter '" + l.counter + "' shadows an existing name" + where(counter.span));
    }
    expect(Tok::KwIn, "'in'");
    Token zero = expect(Tok::Int, "'0'");
    if (zero.intVal != 0) {
      fail(ErrorKind::SyntaxError, "loop range must start at 0" + where(zero.span));
    }
    expect(Tok::DotDot, "'..'");
    l.tripCount = expect(Tok::Int, "trip count").intVal;
    expect(Tok::LBrace, "'{'");
    available_.insert(l.counter);
    if (at(Tok::RBrace)) {
      fail(ErrorKind::EmptyLoopBody,
           "loop must contain at least one statement" + where(cur().span));
    }
    while (!at(Tok::RBrace)) {
      Stmt s = stmt();
      if (s.name == l.counter) {
        fail(ErrorKind::SyntaxError,
             "loop counter '" + s.name + "' cannot be assigned" + where(s.span));
      }
      bodyAssigned_.insert(s.name);
      available_.insert(s.name);
      l.body.push_back(std::move(s));
    }
    expect(Tok::RBrace, "'}'");
    return l;
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
  std::set<std::string> available_;
  std::set<std::string> definedOutsideBody_;
  std::set<std::string> bodyAssigned_;
};

}  // namespace

LoopProgram parseProgram(const std::string& text) { return Parser(text).program(); }

}  // namespace tev
