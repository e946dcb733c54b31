#include "plansieve/query.hpp"

namespace plansieve {

const char* cmp_op_name(CmpOp op) {
    switch (op) {
        case CmpOp::Eq: return "=";
        case CmpOp::Lt: return "<";
        case CmpOp::Gt: return ">";
        case CmpOp::Le: return "<=";
        case CmpOp::Ge: return ">=";
    }
    return "?";
}

CmpOp cmp_op_from_name(const std::string& s) {
    if (s == "=") return CmpOp::Eq;
    if (s == "<") return CmpOp::Lt;
    if (s == ">") return CmpOp::Gt;
    if (s == "<=") return CmpOp::Le;
    if (s == ">=") return CmpOp::Ge;
    throw ValidationError("unknown comparison operator '" + s + "'");
}

bool cmp_eval(std::int64_t lhs, CmpOp op, std::int64_t rhs) {
    switch (op) {
        case CmpOp::Eq: return lhs == rhs;
        case CmpOp::Lt: return lhs < rhs;
        case CmpOp::Gt: return lhs > rhs;
        case CmpOp::Le: return lhs <= rhs;
        case CmpOp::Ge: return lhs >= rhs;
    }
    return false;
}

}  // namespace plansieve
