import { describe, expect, it } from 'vitest'

import { buildViewModel, renderedFacts } from '../src/view'
import type { SessionMessage, SessionView } from '../src/protocol'

const RECIPE =
  'NAME:\nBaked Pumpkin Soup\n\nINGREDIENTS:\npumpkin(1)\n\nCOOKING STEPs:\n1. Cut a pumpkin into slices.'

function serverView(role: 'alice' | 'bob'): SessionView {
  // Mirrors the /view payload: the recipe field is null for Alice.
  return {
    session_id: 's1',
    role,
    status: 'running',
    task: 'baked_pumpkin_soup',
    level: 3,
    order: 'baked_pumpkin_soup',
    recipe: role === 'bob' ? RECIPE : null,
    scene: 2,
    deadline_epoch_ms: null,
    step_limit_ms: null,
    observation: 'Scene 2: <Bob> holds nothing. ...',
    world: {
      timestep: 2,
      time_limit: 26,
      order: 'baked_pumpkin_soup',
      delivered: false,
      delivered_correct: false,
      agents: {
        alice: { holding: 'pumpkin', pending_plan: ['put_obj_in_utensil(chopping_board0)'] },
        bob: { holding: null, pending_plan: [] },
      },
      elements: {
        pot0: { kind: 'utensil', owner: 'bob', utensil_type: 'pot', contents: [], inventory: [], processing: null },
        chopping_board0: {
          kind: 'utensil', owner: 'alice', utensil_type: 'chopping_board',
          contents: [], inventory: [], processing: null,
        },
        oven0: {
          kind: 'utensil', owner: 'bob', utensil_type: 'oven',
          contents: ['pumpkin_slices'], inventory: [],
          processing: { action: 'bake', output: 'baked_pumpkin_slices', remaining: 2 },
        },
        counter: { kind: 'counter', owner: 'shared', utensil_type: '', contents: ['dish'], inventory: [], processing: null },
        ingredient_dispenser: {
          kind: 'dispenser', owner: 'alice', utensil_type: '',
          contents: [], inventory: ['pumpkin'], processing: null,
        },
        delivery: { kind: 'delivery', owner: 'bob', utensil_type: '', contents: [], inventory: [], processing: null },
      },
    },
    transcript: [],
    palette: { functions: [], requestable: [] },
  }
}

const SAY: SessionMessage = {
  v: 1, seq: 4, kind: 'say', session_id: 's1', agent_id: 'bob',
  payload: { scene: 1, text: 'Alice, please cut the pumpkin. [END]' },
}

describe('buildViewModel', () => {
  it('renders the recipe panel for the knowledge holder only', () => {
    const bob = buildViewModel(serverView('bob'), [])
    const alice = buildViewModel(serverView('alice'), [])
    expect(bob.recipePanel).toContain('COOKING STEPs')
    expect(alice.recipePanel).toBeNull()
  })

  it('keeps strict information parity for the alice view', () => {
    const facts = renderedFacts(buildViewModel(serverView('alice'), [SAY]))
    const rendered = facts.join('\n')
    for (const line of RECIPE.split('\n')) {
      if (line.trim()) expect(rendered).not.toContain(line)
    }
    // but world facts and chat are all there
    expect(rendered).toContain('alice holds pumpkin')
    expect(rendered).toContain('oven0: baking, 2 timesteps left')
    expect(rendered).toContain('bob: Alice, please cut the pumpkin. [END]')
  })

  it('summarizes elements, counter and pending plans', () => {
    const model = buildViewModel(serverView('bob'), [SAY])
    expect(model.counterItems).toEqual(['dish'])
    const oven = model.elements.find((e) => e.id === 'oven0')
    expect(oven?.summary).toContain('2 timesteps left')
    const dispenser = model.elements.find((e) => e.id === 'ingredient_dispenser')
    expect(dispenser?.summary).toContain('provides pumpkin')
    expect(model.holdings.find((h) => h.agent === 'alice')?.pending).toEqual([
      'put_obj_in_utensil(chopping_board0)',
    ])
    expect(model.chat).toHaveLength(1)
  })
})
