use crate::autodiff::{SoftMask, Var};
use crate::error::{EhdError, Result};

/// `(1/N) Σ max(dppl_s - log ε, 0)` over per-sample dppl values.
pub fn constraint_loss<'g>(dppls: &[Var<'g>], epsilon: f64) -> Result<Var<'g>> {
    let first = dppls
        .first()
        .ok_or_else(|| EhdError::domain("constraint_loss", "no samples"))?;
    let g = first.graph();
    let hinges: Vec<Var<'g>> = dppls
        .iter()
        .map(|d| d.add_scalar(-epsilon.ln()).relu().reshape(&[1]))
        .collect::<Result<_>>()?;
    g.concat_rows(&hinges)?.mean()
}

/// Mean over samples of the distilled fraction `L¹(ŷ) / card(ŷ)`.
pub fn cardinality_loss<'g>(masks: &[SoftMask<'g>]) -> Result<Var<'g>> {
    let first = masks
        .first()
        .ok_or_else(|| EhdError::domain("cardinality_loss", "no samples"))?;
    let g = first.values.graph();
    let fractions: Vec<Var<'g>> = masks
        .iter()
        .map(|m| m.distill()?.mean()?.reshape(&[1]))
        .collect::<Result<_>>()?;
    g.concat_rows(&fractions)?.mean()
}

/// Number of nonzero entries of a hard mask's distill column.
pub fn l0(mask: &SoftMask<'_>) -> usize {
    mask.values.value().data().chunks(2).filter(|r| r[1] != 0.0).count()
}

/// Sum of absolute values of a mask's distill column.
pub fn l1(mask: &SoftMask<'_>) -> f64 {
    mask.values.value().data().chunks(2).map(|r| r[1].abs()).sum()
}
