// Render model: exactly the facts the corresponding agent prompt carries.
// The recipe panel exists only when the server sent a recipe (the
// knowledge-holding role); nothing is ever synthesized client-side, so
// the view cannot leak information the agent would not have.

import type { Role, SessionMessage, SessionView, WorldSnapshot } from './protocol'

export type ChatLine = { scene: number; speaker: string; text: string }

export type ViewModel = {
  role: Role
  status: string
  order: string
  scene: number
  recipePanel: string | null
  observation: string
  holdings: { agent: string; holding: string | null; pending: string[] }[]
  elements: { id: string; summary: string }[]
  counterItems: string[]
  chat: ChatLine[]
  deadlineEpochMs: number | null
}

const PROCESS_VERBS: Record<string, string> = {
  cook: 'cooking',
  bake: 'baking',
  cut: 'cutting',
  stir: 'stirring',
}

function elementSummary(id: string, el: WorldSnapshot['elements'][string]): string {
  if (el.processing) {
    const verb = PROCESS_VERBS[el.processing.action] ?? el.processing.action
    return `${id}: ${verb}, ${el.processing.remaining} timesteps left`
  }
  if (el.kind === 'dispenser') {
    return `${id}: provides ${el.inventory.join(', ') || 'nothing'}`
  }
  if (el.contents.length === 0) {
    return `${id}: empty`
  }
  return `${id}: ${el.contents.join(', ')}`
}

export function chatFromMessages(messages: SessionMessage[]): ChatLine[] {
  return messages
    .filter((m) => m.kind === 'say')
    .map((m) => ({
      scene: Number(m.payload['scene'] ?? 0),
      speaker: m.agent_id ?? 'unknown',
      text: String(m.payload['text'] ?? ''),
    }))
}

export function buildViewModel(view: SessionView, messages: SessionMessage[]): ViewModel {
  const world = view.world
  const elements = Object.entries(world.elements)
    .filter(([, el]) => el.kind === 'utensil' || el.kind === 'dispenser')
    .map(([id, el]) => ({ id, summary: elementSummary(id, el) }))
  const counter = Object.entries(world.elements).find(([, el]) => el.kind === 'counter')
  return {
    role: view.role,
    status: view.status,
    order: view.order,
    scene: view.scene,
    recipePanel: view.recipe,
    observation: view.observation,
    holdings: Object.entries(world.agents).map(([agent, a]) => ({
      agent,
      holding: a.holding,
      pending: a.pending_plan,
    })),
    elements,
    counterItems: counter ? counter[1].contents : [],
    chat: chatFromMessages(messages),
    deadlineEpochMs: view.deadline_epoch_ms,
  }
}

/** Every text fragment the view model would render, for parity checks. */
export function renderedFacts(model: ViewModel): string[] {
  const facts: string[] = [model.order, model.observation]
  if (model.recipePanel) facts.push(model.recipePanel)
  for (const h of model.holdings) {
    facts.push(`${h.agent} holds ${h.holding ?? 'nothing'}`)
    facts.push(...h.pending)
  }
  facts.push(...model.elements.map((e) => e.summary))
  facts.push(...model.counterItems)
  facts.push(...model.chat.map((c) => `${c.speaker}: ${c.text}`))
  return facts
}
