// DOM wiring for the live session client. All state arrives via server
// messages; the page only renders and submits.

import { SessionClient, httpTransport } from './client'
import { composeAction, composeRequest, joinPlan } from './palette'
import { formatRemaining, makeCountdown } from './countdown'
import { buildViewModel } from './view'
import type { Palette, Role, SessionView } from './protocol'

const $ = (id: string): HTMLElement => {
  const el = document.getElementById(id)
  if (!el) throw new Error(`missing element #${id}`)
  return el
}

let client: SessionClient | null = null
let palette: Palette | null = null
let plannedActions: string[] = []

function renderCountdown(): void {
  if (!client) return
  const countdown = makeCountdown(client.deadlineEpochMs)
  $('countdown').textContent = formatRemaining(countdown, Date.now())
  const locked = !client.inputEnabled()
  ;($('submit-plan') as HTMLButtonElement).disabled = locked
  ;($('submit-say') as HTMLButtonElement).disabled = locked
  $('lockout').textContent = locked && client.deadlineEpochMs !== null ? 'input locked (deadline passed)' : ''
}

async function refreshView(): Promise<void> {
  if (!client) return
  const view: SessionView = await client.view()
  palette = view.palette
  const model = buildViewModel(view, client.messages)
  $('scene').textContent = `scene ${model.scene} (${model.status})`
  $('order').textContent = `Order: ${model.order}`
  $('observation').textContent = model.observation
  const recipePanel = $('recipe-panel')
  if (model.recipePanel) {
    recipePanel.textContent = model.recipePanel
    recipePanel.parentElement!.style.display = ''
  } else {
    recipePanel.parentElement!.style.display = 'none'
  }
  $('holdings').innerHTML = model.holdings
    .map((h) => `<li><b>${h.agent}</b>: ${h.holding ?? 'nothing'} | pending: [${h.pending.join(', ')}]</li>`)
    .join('')
  $('elements').innerHTML = model.elements.map((e) => `<li>${e.summary}</li>`).join('')
  $('counter-items').textContent = model.counterItems.join(', ') || '(empty)'
  $('chat').innerHTML = model.chat
    .map((c) => `<div class="chat-line"><b>${c.speaker}</b> [${c.scene}]: ${c.text}</div>`)
    .join('')
  renderPalette()
}

function renderPalette(): void {
  if (!palette) return
  const select = $('palette-func') as HTMLSelectElement
  const requested = ($('palette-request') as HTMLInputElement).checked
  const names = requested ? palette.requestable : palette.functions.map((f) => f.name)
  select.innerHTML = names.map((n) => `<option value="${n}">${n}</option>`).join('')
  renderArgPickers()
}

function renderArgPickers(): void {
  if (!palette) return
  const requested = ($('palette-request') as HTMLInputElement).checked
  const name = ($('palette-func') as HTMLSelectElement).value
  const container = $('palette-args')
  container.innerHTML = ''
  if (requested) {
    // Teammate actions: free pick of known argument values from any list.
    const all = Array.from(new Set(palette.functions.flatMap((f) => f.arg_options.flat())))
    for (let i = 0; i < 2; i++) {
      const input = document.createElement('input')
      input.className = 'palette-arg'
      input.setAttribute('list', 'arg-values')
      container.appendChild(input)
      const datalist = document.createElement('datalist')
      datalist.id = 'arg-values'
      datalist.innerHTML = all.map((v) => `<option value="${v}">`).join('')
      container.appendChild(datalist)
    }
    return
  }
  const fn = palette.functions.find((f) => f.name === name)
  if (!fn) return
  for (let i = 0; i < fn.arity; i++) {
    const select = document.createElement('select')
    select.className = 'palette-arg'
    const options = fn.arg_options[i] ?? []
    select.innerHTML = options.map((v) => `<option value="${v}">${v}</option>`).join('')
    container.appendChild(select)
  }
}

function pickAction(): void {
  if (!palette) return
  const requested = ($('palette-request') as HTMLInputElement).checked
  const name = ($('palette-func') as HTMLSelectElement).value
  const args = Array.from(document.querySelectorAll('.palette-arg'))
    .map((el) => (el as HTMLInputElement | HTMLSelectElement).value)
    .filter((v) => v !== '')
  try {
    const action = requested ? composeRequest(palette, name, args) : composeAction(palette, name, args)
    plannedActions.push(action)
    $('plan-preview').textContent = joinPlan(plannedActions)
    $('palette-error').textContent = ''
  } catch (err) {
    $('palette-error').textContent = String(err)
  }
}

async function submitPlan(): Promise<void> {
  if (!client) return
  try {
    const verdict = await client.submitPlan(joinPlan(plannedActions), '')
    $('verdict').textContent = verdict.accepted ? 'submitted' : `rejected: ${verdict.error}`
    plannedActions = []
    $('plan-preview').textContent = ''
  } catch (err) {
    $('verdict').textContent = String(err)
  }
}

async function submitSay(): Promise<void> {
  if (!client) return
  const input = $('say-input') as HTMLInputElement
  try {
    const verdict = await client.submitSay(input.value)
    $('verdict').textContent = verdict.accepted ? 'message sent' : `rejected: ${verdict.error}`
    input.value = ''
  } catch (err) {
    $('verdict').textContent = String(err)
  }
}

async function connect(): Promise<void> {
  const server = ($('server-url') as HTMLInputElement).value
  const sessionId = ($('session-id') as HTMLInputElement).value.trim()
  const role = ($('role-select') as HTMLSelectElement).value as Role
  const task = ($('task-name') as HTMLInputElement).value.trim()
  const limit = ($('step-limit') as HTMLSelectElement).value
  const transport = httpTransport(server)
  try {
    if (sessionId) {
      client = new SessionClient(transport, sessionId, role)
      await client.join()
    } else {
      client = await SessionClient.create(transport, {
        task,
        role,
        stepLimitSeconds: limit === 'unlimited' ? null : Number(limit),
      })
    }
  } catch (err) {
    $('join-error').textContent = String(err)
    client = null
    return
  }
  $('join-error').textContent = ''
  $('join-panel').style.display = 'none'
  $('session-panel').style.display = ''
  client.run().catch(() => undefined)
  window.setInterval(renderCountdown, 100)
  window.setInterval(() => refreshView().catch(() => undefined), 500)
}

window.addEventListener('load', () => {
  $('connect').addEventListener('click', () => void connect())
  $('palette-add').addEventListener('click', pickAction)
  $('submit-plan').addEventListener('click', () => void submitPlan())
  $('submit-say').addEventListener('click', () => void submitSay())
  $('palette-func').addEventListener('change', renderArgPickers)
  $('palette-request').addEventListener('change', renderPalette)
})
