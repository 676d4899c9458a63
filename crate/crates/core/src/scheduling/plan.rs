use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::messaging::ChannelId;
use crate::protocol::{EpochTime, ProductKind, ProductSpec};

use super::{negotiate_service, Awarded, Market, NegotiationConfig, PlanError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanState {
    Pending,
    Negotiating,
    Scheduled,
    Executing,
    Done,
    Failed,
}

pub type ProductCatalog = BTreeMap<String, ProductSpec>;

/// Finished parts on hand, by product name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StockTable(BTreeMap<String, u32>);

impl StockTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, product: &str, count: u32) {
        self.0.insert(product.to_string(), count);
    }

    pub fn count(&self, product: &str) -> u32 {
        self.0.get(product).copied().unwrap_or(0)
    }

    /// Takes one unit if available.
    pub fn take(&mut self, product: &str) -> bool {
        match self.0.get_mut(product) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// One order in a decomposition tree. Components not taken from stock become
/// child nodes (child order holons when run live).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanNode {
    pub product: ProductSpec,
    pub state: PlanState,
    pub children: Vec<PlanNode>,
    pub from_stock: Vec<String>,
    /// One award per service step, in step order.
    pub awarded: Vec<Awarded>,
}

impl PlanNode {
    pub fn leaf(product: ProductSpec) -> Self {
        Self {
            product,
            state: PlanState::Pending,
            children: Vec::new(),
            from_stock: Vec::new(),
            awarded: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(PlanNode::depth).max().unwrap_or(0)
    }

    /// Nodes in the tree, this one included.
    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(PlanNode::node_count)
            .sum::<usize>()
    }

    /// End of this node's last awarded slot.
    pub fn end(&self) -> Option<EpochTime> {
        self.awarded.iter().map(|a| a.slot.end).max()
    }

    /// Every awarded slot in the tree, children first.
    pub fn all_awards(&self) -> Vec<&Awarded> {
        let mut out: Vec<&Awarded> = self
            .children
            .iter()
            .flat_map(PlanNode::all_awards)
            .collect();
        out.extend(self.awarded.iter());
        out
    }

    /// Checks the state invariants and that every slot starts no earlier than
    /// every descendant slot ends.
    pub fn is_consistent(&self) -> bool {
        let children_ok = self.children.iter().all(PlanNode::is_consistent);
        let state_ok = match self.state {
            PlanState::Done => self.children.iter().all(|c| c.state == PlanState::Done),
            PlanState::Scheduled | PlanState::Executing => {
                self.awarded.len() == self.product.services.len()
            }
            _ => true,
        };
        let descendants_end = self
            .children
            .iter()
            .flat_map(PlanNode::all_awards)
            .map(|a| a.slot.end)
            .max();
        let precedence_ok = match descendants_end {
            Some(end) => self.awarded.iter().all(|a| a.slot.start >= end),
            None => true,
        };
        children_ok && state_ok && precedence_ok
    }

    fn fail(&mut self) {
        self.state = PlanState::Failed;
    }
}

/// Expands `product` into a tree. Components on stock are consumed; the rest
/// become child nodes. `stock` is left untouched on error.
pub fn decompose_order(
    product: &ProductSpec,
    catalog: &ProductCatalog,
    stock: &mut StockTable,
) -> Result<PlanNode, PlanError> {
    let mut work = stock.clone();
    let mut path = vec![product.name.clone()];
    let node = expand(product, catalog, &mut work, &mut path)?;
    *stock = work;
    Ok(node)
}

fn expand(
    product: &ProductSpec,
    catalog: &ProductCatalog,
    stock: &mut StockTable,
    path: &mut Vec<String>,
) -> Result<PlanNode, PlanError> {
    let mut node = PlanNode::leaf(product.clone());
    if product.kind == ProductKind::Simple {
        return Ok(node);
    }
    for component in product.components() {
        if path.iter().any(|p| p == component) {
            return Err(PlanError::CyclicProduct(component.to_string()));
        }
        if stock.take(component) {
            node.from_stock.push(component.to_string());
            continue;
        }
        let spec = catalog
            .get(component)
            .ok_or_else(|| PlanError::UnknownProduct(component.to_string()))?;
        path.push(component.to_string());
        let child = expand(spec, catalog, stock, path)?;
        path.pop();
        node.children.push(child);
    }
    Ok(node)
}

/// Negotiates every service in the tree, children before parents. A parent's
/// first service may start no earlier than its children's last slot ends.
/// Conversations are named `"{prefix}:{n}"` in negotiation order.
pub fn schedule_plan(
    plan: &mut PlanNode,
    market: &mut impl Market,
    now: EpochTime,
    me: ChannelId,
    prefix: &str,
    cfg: NegotiationConfig,
) -> Result<(), PlanError> {
    let mut counter = 0;
    schedule_node(plan, market, now, me, prefix, cfg, &mut counter)
}

fn schedule_node(
    node: &mut PlanNode,
    market: &mut impl Market,
    now: EpochTime,
    me: ChannelId,
    prefix: &str,
    cfg: NegotiationConfig,
    counter: &mut u32,
) -> Result<(), PlanError> {
    let mut min_start = now;
    for child in &mut node.children {
        if let Err(e) = schedule_node(child, market, now, me, prefix, cfg, counter) {
            node.fail();
            return Err(e);
        }
        if let Some(end) = child.end() {
            min_start = min_start.max(end);
        }
    }
    node.state = PlanState::Negotiating;
    let steps: Vec<String> = node
        .product
        .services
        .iter()
        .map(|s| s.serv_id.clone())
        .collect();
    for serv_id in steps {
        *counter += 1;
        let conversation = format!("{prefix}:{counter}");
        match negotiate_service(market, &conversation, &serv_id, min_start, me, cfg) {
            Ok(award) => {
                min_start = award.slot.end;
                node.awarded.push(award);
            }
            Err(e) => {
                node.fail();
                return Err(e.into());
            }
        }
    }
    node.state = PlanState::Scheduled;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::RobotMemory;
    use crate::protocol::ServiceDef;
    use crate::scheduling::{CellBidder, InMemoryMarket, NegotiationError};

    fn catalog(specs: &[ProductSpec]) -> ProductCatalog {
        specs.iter().map(|s| (s.name.clone(), s.clone())).collect()
    }

    fn p10_catalog() -> ProductCatalog {
        catalog(&[
            ProductSpec::composite("P_10", "S_10", &["P_20", "P_21"]),
            ProductSpec::simple("P_20", &["S_20"]),
            ProductSpec::simple("P_21", &["S_21"]),
        ])
    }

    fn market(services: Vec<ServiceDef>) -> InMemoryMarket {
        let ids: Vec<String> = services.iter().map(|s| s.serv_id.clone()).collect();
        let mut m = InMemoryMarket::default();
        m.add_cell(CellBidder::new(
            "225.0.0.1:3002".parse().unwrap(),
            services,
            RobotMemory::preloaded(8, &ids),
            120,
        ));
        m
    }

    const ME: &str = "225.0.0.1:2101";

    #[test]
    fn fig4_tree_with_stocked_component() {
        let cat = catalog(&[
            ProductSpec::composite("A", "S_A", &["B", "C"]),
            ProductSpec::composite("B", "S_B", &["D", "E"]),
            ProductSpec::simple("C", &["S_C"]),
            ProductSpec::simple("D", &["S_D"]),
            ProductSpec::simple("E", &["S_E"]),
        ]);
        let mut stock = StockTable::new();
        stock.set("E", 1);
        let tree = decompose_order(&cat["A"], &cat, &mut stock).unwrap();
        assert_eq!(tree.depth(), 3);
        assert_eq!(tree.node_count(), 4);
        assert_eq!(tree.children[0].from_stock, ["E"]);
        assert_eq!(stock.count("E"), 0);
    }

    #[test]
    fn p10_decomposes_into_two_children() {
        let cat = p10_catalog();
        let tree = decompose_order(&cat["P_10"], &cat, &mut StockTable::new()).unwrap();
        let names: Vec<&str> = tree
            .children
            .iter()
            .map(|c| c.product.name.as_str())
            .collect();
        assert_eq!(names, ["P_20", "P_21"]);
        assert_eq!(tree.product.services[0].serv_id, "S_10");
        let leaf = decompose_order(&cat["P_20"], &cat, &mut StockTable::new()).unwrap();
        assert_eq!(leaf.node_count(), 1);
    }

    #[test]
    fn unknown_and_cyclic_products() {
        let cat = catalog(&[
            ProductSpec::composite("A", "S", &["X"]),
            ProductSpec::composite("L", "S", &["M"]),
            ProductSpec::composite("M", "S", &["L"]),
        ]);
        let mut stock = StockTable::new();
        assert_eq!(
            decompose_order(&cat["A"], &cat, &mut stock),
            Err(PlanError::UnknownProduct("X".into()))
        );
        assert_eq!(
            decompose_order(&cat["L"], &cat, &mut stock),
            Err(PlanError::CyclicProduct("L".into()))
        );
    }

    #[test]
    fn stock_restored_on_failure() {
        let cat = catalog(&[
            ProductSpec::composite("A", "S", &["B", "X"]),
            ProductSpec::simple("B", &["S"]),
        ]);
        let mut stock = StockTable::new();
        stock.set("B", 2);
        assert!(decompose_order(&cat["A"], &cat, &mut stock).is_err());
        assert_eq!(stock.count("B"), 2);
    }

    #[test]
    fn p10_schedule_orders_join_after_parts() {
        let cat = p10_catalog();
        let mut tree = decompose_order(&cat["P_10"], &cat, &mut StockTable::new()).unwrap();
        let mut m = market(vec![
            ServiceDef::placement("S_20", 60, 2),
            ServiceDef::placement("S_21", 60, 2),
            ServiceDef::join("S_10", 45),
        ]);
        schedule_plan(
            &mut tree,
            &mut m,
            EpochTime(1000),
            ME.parse().unwrap(),
            "P_10",
            Default::default(),
        )
        .unwrap();
        assert_eq!(tree.state, PlanState::Scheduled);
        assert!(tree.is_consistent());
        let s10 = &tree.awarded[0].slot;
        let parts_end = tree
            .children
            .iter()
            .filter_map(PlanNode::end)
            .max()
            .unwrap();
        assert!(s10.start >= parts_end);
        assert_eq!(s10.start, EpochTime(1120));
        assert!(m.cells.values().next().unwrap().agenda().is_consistent());
    }

    #[test]
    fn failure_propagates_to_ancestors() {
        let cat = p10_catalog();
        let mut tree = decompose_order(&cat["P_10"], &cat, &mut StockTable::new()).unwrap();
        let mut m = market(vec![
            ServiceDef::placement("S_20", 60, 2),
            ServiceDef::join("S_10", 45),
        ]);
        let e = schedule_plan(
            &mut tree,
            &mut m,
            EpochTime(0),
            ME.parse().unwrap(),
            "P_10",
            Default::default(),
        )
        .unwrap_err();
        assert_eq!(
            e,
            PlanError::Negotiation(NegotiationError::NoProvider("S_21".into()))
        );
        assert_eq!(tree.state, PlanState::Failed);
        assert_eq!(tree.children[1].state, PlanState::Failed);
        assert_eq!(tree.children[0].state, PlanState::Scheduled);
    }
}
