#include "tokalign/contrastive.hpp"

namespace tokalign {

ContrastiveOut contrastive_loss_with_sim(Tape& t, int teacher, int speech, double tau,
                                         bool keep_tau_factor) {
    const Matrix& B = t.val(teacher);
    const Matrix& Bs = t.val(speech);
    if (B.rows != Bs.rows || B.cols != Bs.cols)
        throw std::invalid_argument("contrastive: shape mismatch " + B.shape_str() + " vs " +
                                    Bs.shape_str());
    int b = B.rows;
    if (b < 1) throw std::invalid_argument("contrastive: empty batch");
    int sim = t.cosine_sim(teacher, speech, tau);
    int row_terms = t.trace(t.log_softmax_rows(sim));
    int col_terms = t.trace(t.log_softmax_rows(t.transpose(sim)));
    double factor = -(keep_tau_factor ? tau : 1.0) / (2.0 * b);
    int loss = t.scale(t.add(row_terms, col_terms), factor);
    return {loss, sim};
}

int tokenwise_contrastive_loss(Tape& t, int teacher, int speech, double tau, bool keep_tau_factor) {
    return contrastive_loss_with_sim(t, teacher, speech, tau, keep_tau_factor).loss;
}

int sequence_contrastive_loss(Tape& t, int pooled_speech, int teacher_cls, double tau,
                              bool keep_tau_factor) {
    return contrastive_loss_with_sim(t, teacher_cls, pooled_speech, tau, keep_tau_factor).loss;
}

}  // namespace tokalign
