//! Full evaluation of one hyperparameter point: transforms, design matrix,
//! ridge fit, fit metrics, contribution decomposition and objectives.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::{DepVarType, MmmDataset};
use crate::decomposition::DecompositionResult;
use crate::error::{bail, Result};
use crate::evaluation::{
    decomp_rssd, mape_lift, predicted_lift, shares, ContributionSource, LiftScope, LiftStudy, ObjectiveScores,
};
use crate::hyper::HyperparameterVector;
use crate::regression::{
    fit_ridge, lambda_bounds, score_fit, ColumnRole, DesignColumn, DesignMatrix, FitMetrics, LambdaBounds, RidgeFit,
    SplitPlan, Splits,
};
use crate::transforms::{transform_channel, TransformedChannel};

#[derive(Debug, Clone)]
struct ChannelData {
    name: String,
    role: ColumnRole,
    /// First row through window end.
    history: Vec<f64>,
}

/// Everything fixed across candidate evaluations of one run.
#[derive(Debug, Clone)]
pub struct ModelContext {
    dataset: MmmDataset,
    decomposition: DecompositionResult,
    split: SplitPlan,
    splits: Splits,
    studies: Vec<LiftStudy>,
    rssd_reference: Option<Vec<f64>>,
    channels: Vec<ChannelData>,
    context: Vec<(String, Vec<f64>)>,
    paid_spend_totals: Vec<f64>,
    spend_shares: Vec<f64>,
}

impl ModelContext {
    pub fn new(
        dataset: MmmDataset,
        decomposition: DecompositionResult,
        split: SplitPlan,
        studies: Vec<LiftStudy>,
    ) -> Result<Self> {
        if decomposition.dates.len() != dataset.window_len() {
            bail!(InvalidParameter, "decomposition does not match the dataset window");
        }
        let splits = split.splits(dataset.window_len())?;
        let roles = dataset.roles().clone();
        let mut channels = Vec::new();
        for name in &roles.paid_media_spends {
            channels.push(ChannelData {
                name: name.clone(),
                role: ColumnRole::PaidMedia,
                history: dataset.history(name).expect("validated"),
            });
        }
        for name in dataset.organic_channels() {
            channels.push(ChannelData {
                history: dataset.history(&name).expect("validated"),
                name,
                role: ColumnRole::Organic,
            });
        }
        let paid_spend_totals: Vec<f64> = roles
            .paid_media_spends
            .iter()
            .map(|c| dataset.window_values(c).expect("validated").iter().sum())
            .collect();
        let spend_shares = shares(&paid_spend_totals);
        let context = dataset.context_regressors();
        let ctx = ModelContext {
            dataset,
            decomposition,
            split,
            splits,
            studies,
            rssd_reference: None,
            channels,
            context,
            paid_spend_totals,
            spend_shares,
        };
        ctx.check_studies()?;
        Ok(ctx)
    }

    /// Decomp.RSSD against these effect shares instead of spend shares.
    pub fn with_rssd_reference(mut self, reference: Vec<f64>) -> Result<Self> {
        if reference.len() != self.spend_shares.len() {
            bail!(InvalidParameter, "reference shares do not match the paid channels");
        }
        self.rssd_reference = Some(reference);
        Ok(self)
    }

    fn check_studies(&self) -> Result<()> {
        let probe = StudyProbe { ctx: self };
        for s in &self.studies {
            predicted_lift(&probe, s)?;
        }
        Ok(())
    }

    pub fn dataset(&self) -> &MmmDataset {
        &self.dataset
    }

    pub fn decomposition(&self) -> &DecompositionResult {
        &self.decomposition
    }

    pub fn studies(&self) -> &[LiftStudy] {
        &self.studies
    }

    pub fn split_plan(&self) -> SplitPlan {
        self.split
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn calibrated(&self) -> bool {
        !self.studies.is_empty()
    }

    pub fn spend_shares(&self) -> &[f64] {
        &self.spend_shares
    }

    pub fn rssd_reference(&self) -> Option<&[f64]> {
        self.rssd_reference.as_deref()
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }

    pub fn paid_channel_names(&self) -> &[String] {
        &self.dataset.roles().paid_media_spends
    }

    /// Resolves an exposure variable to its spend column; other names pass
    /// through.
    fn canonical<'a>(&'a self, name: &'a str) -> &'a str {
        let roles = self.dataset.roles();
        roles
            .paid_media_vars
            .iter()
            .position(|v| v == name)
            .map(|i| roles.paid_media_spends[i].as_str())
            .unwrap_or(name)
    }

    pub fn evaluate(&self, hp: &HyperparameterVector) -> Result<ModelFit> {
        let n = self.dataset.window_len();
        let mut transforms = Vec::with_capacity(self.channels.len());
        let mut columns = Vec::new();
        for ch in &self.channels {
            let params = match hp.params(&ch.name) {
                Some(p) => p,
                None => bail!(InvalidParameter, "no hyperparameters for channel '{}'", ch.name),
            };
            let t = transform_channel(&ch.history, params, n)?;
            columns.push(DesignColumn {
                name: ch.name.clone(),
                role: ch.role,
                values: t.saturated.clone(),
            });
            transforms.push(t);
        }
        for (name, values) in &self.context {
            columns.push(DesignColumn {
                name: name.clone(),
                role: ColumnRole::Context,
                values: values.clone(),
            });
        }
        for (c, values) in self.decomposition.regressors() {
            columns.push(DesignColumn {
                name: c.to_string(),
                role: ColumnRole::Decomposition,
                values: values.to_vec(),
            });
        }
        let design = DesignMatrix::new(columns, self.dataset.dependent().to_vec(), self.splits.train.clone())?;
        let bounds = lambda_bounds(&design)?;
        let lambda = if bounds.degenerate { 0.0 } else { bounds.at(hp.lambda) };
        let ridge = fit_ridge(&design, lambda, &design.lower_bounds())?;
        let metrics = score_fit(&ridge, &design, &self.splits)?;
        let predictions = ridge.predict(&design);

        let contributions: Vec<Vec<f64>> = ridge
            .coefficients_data
            .iter()
            .zip(&design.raw)
            .map(|(b, col)| col.iter().map(|v| b * v).collect())
            .collect();

        let k = self.channels.len();
        let mut channels = Vec::with_capacity(k);
        for (j, (ch, t)) in self.channels.iter().zip(&transforms).enumerate() {
            let beta = ridge.coefficients_data[j];
            let total: f64 = contributions[j].iter().sum();
            let immediate: f64 = t.immediate.iter().map(|s| beta * s).sum();
            let raw = &ch.history[ch.history.len() - n..];
            let spend: f64 = raw.iter().sum();
            let mean_adstocked = t.adstocked.iter().sum::<f64>() / n as f64;
            let mean_spend = spend / n as f64;
            channels.push(ChannelSummary {
                channel: ch.name.clone(),
                role: ch.role,
                coefficient: beta,
                total_contribution: total,
                immediate_contribution: immediate,
                spend,
                mean_spend,
                roi: (ch.role == ColumnRole::PaidMedia && spend > 0.0).then(|| total / spend),
                inflection: t.inflection,
                adstock_ratio: if mean_spend > 0.0 { mean_adstocked / mean_spend } else { 0.0 },
            });
        }

        let paid = self.paid_spend_totals.len();
        let paid_contrib: Vec<f64> = channels[..paid].iter().map(|c| c.total_contribution).collect();
        let effect_shares = shares(&paid_contrib);
        let reference = self.rssd_reference.as_deref().unwrap_or(&self.spend_shares);
        let rssd = decomp_rssd(&effect_shares, reference)?;

        let mut fit = ModelFit {
            hyperparameters: hp.clone(),
            dates: self.dataset.window_dates().to_vec(),
            transforms,
            lambda_bounds: bounds,
            ridge,
            metrics,
            predictions,
            contributions,
            channels,
            effect_shares,
            spend_shares: self.spend_shares.clone(),
            scores: ObjectiveScores {
                nrmse: metrics.selection_nrmse(),
                decomp_rssd: rssd,
                mape_lift: None,
            },
            design,
            dep_var_type: self.dataset.roles().dep_var_type,
            exposure_aliases: self
                .dataset
                .roles()
                .paid_media_vars
                .iter()
                .cloned()
                .zip(self.dataset.roles().paid_media_spends.iter().cloned())
                .collect(),
        };
        if self.calibrated() {
            fit.scores.mape_lift = Some(mape_lift(&fit, &self.studies)?);
        }
        Ok(fit)
    }
}

/// Contribution source with unit contributions, used to check that every
/// study resolves before a search starts.
struct StudyProbe<'a> {
    ctx: &'a ModelContext,
}

impl ContributionSource for StudyProbe<'_> {
    fn contribution_dates(&self) -> &[NaiveDate] {
        self.ctx.dataset.window_dates()
    }

    fn channel_contribution(&self, channel: &str, _scope: LiftScope) -> Option<Vec<f64>> {
        let name = self.ctx.canonical(channel);
        self.ctx
            .channels
            .iter()
            .any(|c| c.name == name)
            .then(|| vec![1.0; self.ctx.dataset.window_len()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub channel: String,
    pub role: ColumnRole,
    /// Coefficient on the saturated column, data units.
    pub coefficient: f64,
    pub total_contribution: f64,
    pub immediate_contribution: f64,
    pub spend: f64,
    pub mean_spend: f64,
    /// Contribution per unit spend; paid channels with spend only.
    pub roi: Option<f64>,
    pub inflection: f64,
    /// Mean adstocked level per unit of mean raw spend.
    pub adstock_ratio: f64,
}

impl ChannelSummary {
    pub fn cpa(&self) -> Option<f64> {
        (self.total_contribution > 0.0 && self.role == ColumnRole::PaidMedia).then(|| self.spend / self.total_contribution)
    }

    /// ROI for revenue outcomes, CPA for conversions.
    pub fn efficiency(&self, dep_var_type: DepVarType) -> Option<f64> {
        match dep_var_type {
            DepVarType::Revenue => self.roi,
            DepVarType::Conversion => self.cpa(),
        }
    }
}

/// A fully evaluated model, including per-row series.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub hyperparameters: HyperparameterVector,
    pub dates: Vec<NaiveDate>,
    /// One per media channel, in design order.
    pub transforms: Vec<TransformedChannel>,
    pub design: DesignMatrix,
    pub lambda_bounds: LambdaBounds,
    pub ridge: RidgeFit,
    pub metrics: FitMetrics,
    /// In-window predictions from the training fit.
    pub predictions: Vec<f64>,
    /// Per design column, in-window contributions in data units.
    pub contributions: Vec<Vec<f64>>,
    pub channels: Vec<ChannelSummary>,
    pub effect_shares: Vec<f64>,
    pub spend_shares: Vec<f64>,
    pub scores: ObjectiveScores,
    pub dep_var_type: DepVarType,
    exposure_aliases: Vec<(String, String)>,
}

impl ModelFit {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        let name = self
            .exposure_aliases
            .iter()
            .find(|(v, _)| v == name)
            .map(|(_, s)| s.as_str())
            .unwrap_or(name);
        self.design.names.iter().position(|n| n == name)
    }

    pub fn response(&self) -> &[f64] {
        &self.design.response
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.design
            .response
            .iter()
            .zip(&self.predictions)
            .map(|(y, p)| y - p)
            .collect()
    }

    pub fn paid_channels(&self) -> impl Iterator<Item = &ChannelSummary> {
        self.channels.iter().filter(|c| c.role == ColumnRole::PaidMedia)
    }

    /// Per paid channel ROI (revenue) or CPA (conversion); channels without
    /// a defined value are reported as 0 ROI / infinite CPA.
    pub fn efficiencies(&self) -> Vec<f64> {
        self.paid_channels()
            .map(|c| match self.dep_var_type {
                DepVarType::Revenue => c.roi.unwrap_or(0.0),
                DepVarType::Conversion => c.cpa().unwrap_or(f64::INFINITY),
            })
            .collect()
    }
}

impl ContributionSource for ModelFit {
    fn contribution_dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    fn channel_contribution(&self, channel: &str, scope: LiftScope) -> Option<Vec<f64>> {
        let j = self.column_index(channel)?;
        let t = self.transforms.get(j)?;
        match scope {
            LiftScope::Total => Some(self.contributions[j].clone()),
            LiftScope::Immediate => {
                let b = self.ridge.coefficients_data[j];
                Some(t.immediate.iter().map(|s| b * s).collect())
            }
        }
    }
}
