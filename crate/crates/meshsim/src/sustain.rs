//! Sustainability and cost arithmetic.
//!
//! Users-per-watt, useful-energy ratio, CO2 intensity, and cost-to-capacity
//! KPIs; diesel-to-CO2 conversion; event-scale fuel/power comparisons; and
//! the annual OPEX ledger plus CapEx comparison. All arithmetic is exact in
//! f64 before display rounding; reports carry both the full-precision and
//! the display-rounded value.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SustainError {
    #[error("zero denominator computing {0}")]
    ZeroDenominator(&'static str),
    #[error("useful energy {e_use} exceeds total energy {e_tot}")]
    EnergyOrder { e_use: f64, e_tot: f64 },
    #[error("cost ledger missing categories: {0:?}")]
    IncompleteLedger(Vec<String>),
}

/// Users served per watt of site power.
pub fn users_per_watt(users: f64, power_w: f64) -> Result<f64, SustainError> {
    if power_w <= 0.0 {
        return Err(SustainError::ZeroDenominator("users_per_watt"));
    }
    Ok(users / power_w)
}

/// Fraction of site energy that reaches receivers as useful energy, in [0, 1].
pub fn energy_to_user(e_use_j: f64, e_tot_j: f64) -> Result<f64, SustainError> {
    if e_tot_j <= 0.0 {
        return Err(SustainError::ZeroDenominator("energy_to_user"));
    }
    if e_use_j > e_tot_j {
        return Err(SustainError::EnergyOrder {
            e_use: e_use_j,
            e_tot: e_tot_j,
        });
    }
    Ok(e_use_j / e_tot_j)
}

/// Emitted CO2 tonnes per GB of delivered traffic.
pub fn co2_intensity(co2_tonnes: f64, traffic_gb: f64) -> Result<f64, SustainError> {
    if traffic_gb <= 0.0 {
        return Err(SustainError::ZeroDenominator("co2_intensity"));
    }
    Ok(co2_tonnes / traffic_gb)
}

/// Annual cost per Gbps of delivered throughput.
pub fn cost_to_capacity(annual_cost_usd: f64, throughput_gbps: f64) -> Result<f64, SustainError> {
    if throughput_gbps <= 0.0 {
        return Err(SustainError::ZeroDenominator("cost_to_capacity"));
    }
    Ok(annual_cost_usd / throughput_gbps)
}

/// Default diesel emission factor, kg CO2 per liter.
pub const CO2_KG_PER_LITER: f64 = 2.68;

/// Diesel liters to CO2 tonnes.
pub fn diesel_to_co2(liters: f64, kg_per_liter: f64) -> f64 {
    liters * kg_per_liter / 1000.0
}

/// Inputs for an event-scale (or annual) fleet comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct EventScenario {
    pub name: String,
    pub n_towers: u64,
    pub liters_per_tower_per_day: f64,
    pub days: u64,
    pub co2_kg_per_liter: f64,
    pub mesh_n_towers: u64,
    pub mesh_n_nodes: u64,
    pub mesh_liters_total: f64,
    pub macro_w_per_tower: f64,
    pub mesh_total_w: f64,
    /// Footnotes surfacing internal inconsistencies of the preset inputs.
    pub notes: Vec<String>,
}

impl EventScenario {
    /// 7,000 diesel towers for a 5-day event versus 1,400 reduced-power
    /// towers plus 10,000 mesh nodes.
    pub fn hajj_5day() -> EventScenario {
        EventScenario {
            name: "hajj_5day".into(),
            n_towers: 7000,
            liters_per_tower_per_day: 500.0,
            days: 5,
            co2_kg_per_liter: CO2_KG_PER_LITER,
            mesh_n_towers: 1400,
            mesh_n_nodes: 10_000,
            mesh_liters_total: 3.5e6,
            macro_w_per_tower: 120.0,
            mesh_total_w: 180_000.0,
            notes: vec![
                "per-tower draw is 120 W in this preset but 5 kW in the annual preset; \
                 both source figures are preserved verbatim"
                    .into(),
            ],
        }
    }

    /// Annual fleet preset: 56 M liters and ~148,000 t across 7,000 towers.
    /// Internally inconsistent with the 5-day preset; reported side by side,
    /// never reconciled.
    pub fn annual_fleet() -> EventScenario {
        EventScenario {
            name: "annual_fleet".into(),
            n_towers: 7000,
            liters_per_tower_per_day: 56.0e6 / 7000.0 / 365.0,
            days: 365,
            co2_kg_per_liter: CO2_KG_PER_LITER,
            mesh_n_towers: 1400,
            mesh_n_nodes: 10_000,
            // solar + battery nodes, diesel generators avoided in steady state
            mesh_liters_total: 0.0,
            macro_w_per_tower: 5000.0,
            mesh_total_w: 1400.0 * 5000.0 * 0.2 + 10_000.0 * 10.0,
            notes: vec![
                "annual figures (56 M L, ~148,000 t) and the 5-day event figures are mutually \
                 inconsistent scenario presets; computed CO2 at 2.68 kg/L is 150,080 t vs the \
                 quoted ~148,000 t"
                    .into(),
                "per-tower draw is 5 kW in this preset but 120 W in the event preset".into(),
            ],
        }
    }
}

/// Derived figures for an EventScenario, full precision plus display strings.
#[derive(Debug, Clone, PartialEq)]
pub struct EventReport {
    pub name: String,
    pub liters_traditional: f64,
    pub liters_mesh: f64,
    pub liters_saved: f64,
    pub co2_traditional_t: f64,
    pub co2_mesh_t: f64,
    pub co2_saved_t: f64,
    pub co2_reduction_pct: f64,
    pub power_traditional_w: f64,
    pub power_mesh_w: f64,
    pub power_reduction_pct: f64,
    pub notes: Vec<String>,
}

pub fn event_report(scenario: &EventScenario) -> EventReport {
    let liters_traditional =
        scenario.n_towers as f64 * scenario.liters_per_tower_per_day * scenario.days as f64;
    let liters_mesh = scenario.mesh_liters_total;
    let co2_traditional_t = diesel_to_co2(liters_traditional, scenario.co2_kg_per_liter);
    let co2_mesh_t = diesel_to_co2(liters_mesh, scenario.co2_kg_per_liter);
    let power_traditional_w = scenario.n_towers as f64 * scenario.macro_w_per_tower;
    EventReport {
        name: scenario.name.clone(),
        liters_traditional,
        liters_mesh,
        liters_saved: liters_traditional - liters_mesh,
        co2_traditional_t,
        co2_mesh_t,
        co2_saved_t: co2_traditional_t - co2_mesh_t,
        co2_reduction_pct: (1.0 - co2_mesh_t / co2_traditional_t) * 100.0,
        power_traditional_w,
        power_mesh_w: scenario.mesh_total_w,
        power_reduction_pct: (1.0 - scenario.mesh_total_w / power_traditional_w) * 100.0,
        notes: scenario.notes.clone(),
    }
}

impl EventReport {
    /// Human-readable block mirroring the carbon-comparison table rows.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("scenario: {}\n", self.name));
        s.push_str(&format!(
            "diesel traditional: {:.0} L (~{:.1} M L)\n",
            self.liters_traditional,
            self.liters_traditional / 1e6
        ));
        s.push_str(&format!(
            "diesel mesh: {:.0} L (~{:.1} M L), saved {:.0} L\n",
            self.liters_mesh,
            self.liters_mesh / 1e6,
            self.liters_saved
        ));
        s.push_str(&format!(
            "co2 traditional: {:.1} t (~{:.0} t), mesh: {:.1} t (~{:.0} t), reduction ~{:.0}%\n",
            self.co2_traditional_t,
            (self.co2_traditional_t / 100.0).round() * 100.0,
            self.co2_mesh_t,
            (self.co2_mesh_t / 100.0).round() * 100.0,
            self.co2_reduction_pct.round()
        ));
        s.push_str(&format!(
            "power traditional: {:.0} W, mesh: {:.0} W, reduction ~{:.0}%\n",
            self.power_traditional_w,
            self.power_mesh_w,
            self.power_reduction_pct.round()
        ));
        for note in &self.notes {
            s.push_str(&format!("note: {note}\n"));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,traditional,mesh,saved_or_reduction\n");
        s.push_str(&format!(
            "diesel_l,{:.3},{:.3},{:.3}\n",
            self.liters_traditional, self.liters_mesh, self.liters_saved
        ));
        s.push_str(&format!(
            "co2_t,{:.6},{:.6},{:.6}\n",
            self.co2_traditional_t, self.co2_mesh_t, self.co2_saved_t
        ));
        s.push_str(&format!(
            "power_w,{:.3},{:.3},{:.3}\n",
            self.power_traditional_w, self.power_mesh_w,
            self.power_traditional_w - self.power_mesh_w
        ));
        s.push_str(&format!(
            "co2_reduction_pct,,,{:.6}\n",
            self.co2_reduction_pct
        ));
        s.push_str(&format!(
            "power_reduction_pct,,,{:.6}\n",
            self.power_reduction_pct
        ));
        s
    }
}

/// One OPEX line item, annual, millions of USD.
#[derive(Debug, Clone, PartialEq)]
pub struct CostItem {
    pub category: String,
    pub traditional_musd: f64,
    pub proposed_musd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger {
    pub items: Vec<CostItem>,
}

/// The eight annual OPEX categories of the reference comparison.
pub const OPEX_CATEGORIES: [&str; 8] = [
    "Fuel Costs",
    "Infrastructure Deployment",
    "Infrastructure Maintenance",
    "Operations Staffing",
    "Equipment Replacement",
    "Monitoring Systems",
    "Training Costs",
    "Regulatory Compliance",
];

impl CostLedger {
    pub fn reference() -> CostLedger {
        let rows: [(&str, f64, f64); 8] = [
            ("Fuel Costs", 67.2, 40.6),
            ("Infrastructure Deployment", 15.0, 12.0),
            ("Infrastructure Maintenance", 8.0, 5.0),
            ("Operations Staffing", 12.0, 8.0),
            ("Equipment Replacement", 6.0, 4.0),
            ("Monitoring Systems", 3.0, 2.0),
            ("Training Costs", 2.0, 1.0),
            ("Regulatory Compliance", 1.5, 1.0),
        ];
        CostLedger {
            items: rows
                .into_iter()
                .map(|(category, traditional_musd, proposed_musd)| CostItem {
                    category: category.into(),
                    traditional_musd,
                    proposed_musd,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpexReport {
    pub total_traditional_musd: f64,
    pub total_proposed_musd: f64,
    pub savings_musd: f64,
    pub savings_pct: f64,
}

pub fn opex_report(ledger: &CostLedger) -> Result<OpexReport, SustainError> {
    let missing: Vec<String> = OPEX_CATEGORIES
        .iter()
        .filter(|cat| !ledger.items.iter().any(|item| item.category == **cat))
        .map(|cat| cat.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(SustainError::IncompleteLedger(missing));
    }
    let total_traditional_musd: f64 = ledger.items.iter().map(|i| i.traditional_musd).sum();
    let total_proposed_musd: f64 = ledger.items.iter().map(|i| i.proposed_musd).sum();
    Ok(OpexReport {
        total_traditional_musd,
        total_proposed_musd,
        savings_musd: total_traditional_musd - total_proposed_musd,
        savings_pct: (1.0 - total_proposed_musd / total_traditional_musd) * 100.0,
    })
}

impl OpexReport {
    pub fn render_text(&self, ledger: &CostLedger) -> String {
        let mut s = String::from("category,traditional_musd,proposed_musd\n");
        for item in &ledger.items {
            s.push_str(&format!(
                "{},{:.1},{:.1}\n",
                item.category, item.traditional_musd, item.proposed_musd
            ));
        }
        s.push_str(&format!(
            "Total Annual Cost,{:.1},{:.1}\n",
            self.total_traditional_musd, self.total_proposed_musd
        ));
        s.push_str(&format!(
            "savings: {:.1} M$/year ({:.1}%, ~{:.0}%)\n",
            self.savings_musd,
            self.savings_pct,
            self.savings_pct.round()
        ));
        s
    }
}

/// CapEx reduction percentage: (1 - proposed/traditional) * 100.
impl OpexReport {
    /// Category-by-category cost rows plus totals, for cost-bar plotting.
    pub fn to_csv(&self, ledger: &CostLedger) -> String {
        let mut s = String::from("category,traditional_musd,proposed_musd\n");
        for item in &ledger.items {
            s.push_str(&format!(
                "{},{:.3},{:.3}\n",
                item.category, item.traditional_musd, item.proposed_musd
            ));
        }
        s.push_str(&format!(
            "Total Annual Cost,{:.3},{:.3}\n",
            self.total_traditional_musd, self.total_proposed_musd
        ));
        s.push_str(&format!(
            "Savings,{:.3},{:.6}\n",
            self.savings_musd, self.savings_pct
        ));
        s
    }
}

pub fn capex_compare(traditional_musd: f64, proposed_musd: f64) -> Result<f64, SustainError> {
    if traditional_musd <= 0.0 {
        return Err(SustainError::ZeroDenominator("capex_compare"));
    }
    Ok((1.0 - proposed_musd / traditional_musd) * 100.0)
}
