use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKind {
    Fast,
    Slow,
}

impl ScanKind {
    /// Default `(t_l, t_d, budget_ms)`.
    pub fn defaults(self) -> (usize, usize, f64) {
        match self {
            ScanKind::Fast => (34, 36, 50.0),
            ScanKind::Slow => (80, 30, 80.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Light,
    Dark,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Light => "light",
            Phase::Dark => "dark",
        }
    }
}

/// One millisecond of a field scan. Light steps carry the slit under
/// illumination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub phase: Phase,
    pub slit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSchedule {
    pub field_id: usize,
    pub t_l: usize,
    pub t_d: usize,
    pub time_budget_ms: f64,
    pub steps: Vec<Step>,
}

impl FieldSchedule {
    pub fn light_steps(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(|s| s.phase == Phase::Light)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSchedule {
    pub kind: ScanKind,
    pub fields: Vec<FieldSchedule>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScheduleOverrides {
    pub t_l: Option<usize>,
    pub t_d: Option<usize>,
    pub budget_ms: Option<f64>,
}

/// Builds `n_fields` consecutive field scans. Within a field the light
/// steps come first and sweep the `slits_per_field` slits in scan order,
/// followed by the dark steps.
pub fn build_scan_schedule(
    kind: ScanKind,
    n_fields: usize,
    slits_per_field: usize,
    overrides: ScheduleOverrides,
) -> Result<ScanSchedule, ModelError> {
    let (dl, dd, db) = kind.defaults();
    let t_l = overrides.t_l.unwrap_or(dl);
    let t_d = overrides.t_d.unwrap_or(dd);
    let budget = overrides.budget_ms.unwrap_or(db);
    let bad = |s: String| Err(ModelError::Schedule(s));
    if n_fields == 0 {
        return bad("at least one field is required".into());
    }
    if t_l + t_d == 0 {
        return bad("t_l + t_d = 0".into());
    }
    if t_l == 0 {
        return bad("a field needs at least one light step".into());
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return bad(format!("time budget {budget} ms must be positive"));
    }
    if slits_per_field == 0 {
        return bad("a field needs at least one slit".into());
    }
    let steps: Vec<Step> = (0..t_l)
        .map(|l| Step {
            phase: Phase::Light,
            slit: Some(l * slits_per_field / t_l),
        })
        .chain((0..t_d).map(|_| Step {
            phase: Phase::Dark,
            slit: None,
        }))
        .collect();
    let fields = (0..n_fields)
        .map(|field_id| FieldSchedule {
            field_id,
            t_l,
            t_d,
            time_budget_ms: budget,
            steps: steps.clone(),
        })
        .collect();
    Ok(ScanSchedule { kind, fields })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_and_slow_defaults() {
        let f = build_scan_schedule(ScanKind::Fast, 1, 4, Default::default()).unwrap();
        let field = &f.fields[0];
        assert_eq!(field.t_l + field.t_d, 70);
        assert_eq!(field.time_budget_ms, 50.0);
        let s = build_scan_schedule(ScanKind::Slow, 1, 4, Default::default()).unwrap();
        assert_eq!(s.fields[0].t_l + s.fields[0].t_d, 110);
        assert_eq!(s.fields[0].time_budget_ms, 80.0);
    }

    #[test]
    fn every_light_step_has_one_slit() {
        let s = build_scan_schedule(ScanKind::Fast, 2, 5, Default::default()).unwrap();
        for field in &s.fields {
            assert_eq!(field.steps.len(), 70);
            let slits: Vec<usize> = field.light_steps().map(|s| s.slit.unwrap()).collect();
            assert_eq!(slits.len(), 34);
            assert!(slits.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!((slits[0], slits[33]), (0, 4));
            assert!(field.steps.iter().filter(|s| s.phase == Phase::Dark).all(|s| s.slit.is_none()));
        }
    }

    #[test]
    fn overrides_and_errors() {
        let o = ScheduleOverrides {
            t_l: Some(2),
            t_d: Some(1),
            budget_ms: Some(5.0),
        };
        let s = build_scan_schedule(ScanKind::Slow, 1, 1, o).unwrap();
        assert_eq!((s.fields[0].t_l, s.fields[0].t_d, s.fields[0].time_budget_ms), (2, 1, 5.0));
        let zero = ScheduleOverrides {
            t_l: Some(0),
            t_d: Some(0),
            budget_ms: None,
        };
        assert!(matches!(
            build_scan_schedule(ScanKind::Fast, 1, 1, zero),
            Err(ModelError::Schedule(_))
        ));
        assert!(build_scan_schedule(ScanKind::Fast, 0, 1, Default::default()).is_err());
    }
}
